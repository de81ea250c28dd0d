// Generate a small subject-biased dataset, train MTSDNet-A-tsg on one held-out subject
// and print what each layer pulled out of the first test window.

#include "mtsd/mtsd.hpp"

#include <cstdio>

using namespace mtsd;

int main() {
    data::SynthSpec spec;
    auto [manifest, recordings] = data::synth_generate(spec, 7);

    harness::TrainConfig config;
    config.spec = "A-tsg";
    const auto split = harness::prepare_split(recordings, manifest, 0, manifest.preprocess);
    auto outcome = harness::train_on_split(split, manifest, 0, config, 1);
    std::printf("held-out subject %d: accuracy %.3f, macro-F1 %.3f\n", manifest.parts[0][0],
                outcome.result.metrics.accuracy, outcome.result.metrics.f1);

    auto& net = dynamic_cast<Mtsdnet&>(*outcome.model);
    const auto weights = net.attention();
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        std::printf("layer %zu (%s): attention %.3f\n", l, std::string(to_string(net.layer(l).config.kind)).c_str(),
                    weights[l]);
    }

    const std::vector<std::size_t> first{0};
    const auto result = net.forward(split.test.batch(first), false);
    const std::size_t H = manifest.window;
    std::printf("\nchannel 0 of test window 0 (every 8th step)\n   t     input     trend  seasonal   general  residual\n");
    const auto x = split.test.batch(first).values();
    for (std::size_t t = 0; t < H; t += 8) {
        std::printf("%4zu %9.3f %9.3f %9.3f %9.3f %9.3f\n", t, x[t], result.layers[0].component[t],
                    result.layers[1].component[t], result.layers[2].component[t], result.residual[t]);
    }
    return 0;
}
