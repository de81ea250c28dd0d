#pragma once

#include "mtsd/data/dataset.hpp"
#include "mtsd/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

namespace mtsd::data {

struct SynthSpec {
    std::size_t subjects = 6;
    std::size_t classes = 4;
    std::size_t channels = 3;
    std::size_t length = 6144; // T per subject
    double bias_scale = 5.0;
    double noise_scale = 0.3;
    double drift_scale = 0.005;
    double trend_scale = 0.5; // class ramp height across one window
    std::size_t window = 64;
    std::size_t stride = 16;
    // activity segment lengths, in windows
    std::size_t segment_min = 8;
    std::size_t segment_max = 16;
};

/// Class c: frequency by c / 2, amplitude by c % 2, slope sign by (c / 2) % 2.
struct SynthClass {
    double frequency; // cycles per sample
    double amplitude;
    double slope;     // per sample, applied as a ramp centred on each segment
};

inline SynthClass synth_class(std::size_t c, std::size_t window, double trend_scale = 0.5) {
    const double H = static_cast<double>(window);
    const std::size_t f = c / 2;
    return {(1.5 + 2.0 * static_cast<double>(f)) / H, c % 2 == 0 ? 1.0 : 2.5,
            (f % 2 == 0 ? 1.0 : -1.0) * trend_scale / H};
}

/// Subject-biased sinusoid mixture. Each subject gets a channel offset, a phase, a slow random-walk drift
/// and white noise; each class has its own frequency, amplitude and segment ramp. LOSO manifest.
inline std::pair<DatasetManifest, std::vector<Recording>> synth_generate(const SynthSpec& spec, std::uint64_t seed) {
    if (spec.subjects < 2 || spec.classes < 2) throw UsageError("synth: need at least 2 subjects and 2 classes");
    if (spec.channels == 0 || spec.window == 0 || spec.stride == 0) throw UsageError("synth: geometry must be positive");
    if (spec.length < spec.window) throw UsageError("synth: length shorter than the window");
    if (spec.segment_min == 0 || spec.segment_min > spec.segment_max) throw UsageError("synth: bad segment length range");
    if (spec.bias_scale < 0 || spec.noise_scale < 0 || spec.drift_scale < 0 || spec.trend_scale < 0) throw UsageError("synth: negative scale");

    DatasetManifest m;
    m.name = "synthetic";
    m.channels = spec.channels;
    m.classes = spec.classes;
    for (std::size_t c = 0; c < spec.classes; ++c) m.class_names.push_back("class_" + std::to_string(c));
    m.window = spec.window;
    m.stride = spec.stride;
    m.preprocess = Preprocess::standard;
    for (std::size_t s = 0; s < spec.subjects; ++s) m.parts.push_back({static_cast<SubjectId>(s + 1)});

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t seg_min = spec.segment_min * spec.window, seg_max = spec.segment_max * spec.window;
    std::uniform_int_distribution<std::size_t> seg_len(seg_min, seg_max);

    std::vector<Recording> out;
    for (std::size_t s = 0; s < spec.subjects; ++s) {
        Recording r;
        r.subject_id = static_cast<SubjectId>(s + 1);
        r.channels = spec.channels;
        const std::size_t T = spec.length;

        // Contiguous segments cycling through shuffled class orders.
        std::vector<std::size_t> order(spec.classes);
        std::size_t next = order.size();
        std::vector<std::pair<std::size_t, std::size_t>> segments; // (start, end)
        r.labels.reserve(T);
        while (r.labels.size() < T) {
            if (next == order.size()) {
                for (std::size_t c = 0; c < order.size(); ++c) order[c] = c;
                std::shuffle(order.begin(), order.end(), rng);
                next = 0;
            }
            const std::size_t start = r.labels.size();
            const std::size_t len = std::min(seg_len(rng), T - start);
            r.labels.insert(r.labels.end(), len, order[next++]);
            segments.emplace_back(start, start + len);
        }

        r.samples.assign(spec.channels * T, 0.0);
        for (std::size_t k = 0; k < spec.channels; ++k) {
            const double bias = spec.bias_scale * normal(rng);
            const double phase = 2.0 * std::numbers::pi * unit(rng);
            double drift = 0.0;
            for (const auto& [start, end] : segments) {
                const SynthClass cls = synth_class(r.labels[start], spec.window, spec.trend_scale);
                const double centre = 0.5 * static_cast<double>(start + end - 1);
                for (std::size_t t = start; t < end; ++t) {
                    const double td = static_cast<double>(t);
                    drift += spec.drift_scale * normal(rng);
                    const double v = bias + cls.slope * (td - centre) +
                                     cls.amplitude * std::sin(2.0 * std::numbers::pi * cls.frequency * td + phase) + drift +
                                     spec.noise_scale * normal(rng);
                    r.at(k, t) = v;
                }
            }
        }
        out.push_back(std::move(r));
    }
    return {std::move(m), std::move(out)};
}

} // namespace mtsd::data
