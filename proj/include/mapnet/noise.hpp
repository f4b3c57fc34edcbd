#pragma once

#include <cstdint>
#include <vector>

#include "mapnet/pose.hpp"

namespace mapnet {

enum class SwapPairPolicy {
    // 80% left/right counterpart pair, 20% uniform distinct pair.
    MostlySymmetric,
    // Uniform over all distinct pairs.
    Uniform,
};

struct NoiseParams {
    double jitter_std_mm = 300.0;
    double swap_rate_per_min = 5.0;
    double swap_dur_min_s = 0.5;
    double swap_dur_max_s = 3.0;
    int n_variants = 10;
    std::uint64_t base_seed = 0;
    SwapPairPolicy pair_policy = SwapPairPolicy::MostlySymmetric;

    void validate() const;
};

struct SwapEvent {
    double start_s = 0.0;
    double duration_s = 0.0;
    JointId joint_a{};
    JointId joint_b{};
};

struct InvalidEvent : std::runtime_error {
    explicit InvalidEvent(const std::string& what) : std::runtime_error(what) {}
};

// Adds i.i.d. zero-mean Gaussian noise of the given std to every coordinate.
PoseSequence add_jitter(const PoseSequence& seq, double std_mm, std::uint64_t seed);

// Poisson-count swap events: starts uniform over the sequence, durations
// uniform in [dur_min, dur_max] clipped at the sequence end.
std::vector<SwapEvent> sample_swap_events(double duration_s, const NoiseParams& params,
                                          std::uint64_t seed);

// Exchanges the two joints' positions frame-wise within each event span.
PoseSequence apply_swaps(const PoseSequence& seq, const std::vector<SwapEvent>& events);

struct NoiseVariant {
    PoseSequence pose;
    std::vector<SwapEvent> events;
};

// Variant i is seeded with base_seed + i; swaps applied after jitter.
std::vector<NoiseVariant> generate_variants(const PoseSequence& seq,
                                            const NoiseParams& params);

}  // namespace mapnet
