#include "mapnet/noise.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mapnet {

void NoiseParams::validate() const {
    if (jitter_std_mm < 0) throw std::invalid_argument("jitter_std_mm < 0");
    if (swap_rate_per_min < 0) throw std::invalid_argument("swap_rate_per_min < 0");
    if (swap_dur_min_s > swap_dur_max_s) {
        throw std::invalid_argument("swap_dur_min_s > swap_dur_max_s");
    }
    if (n_variants < 1) throw std::invalid_argument("n_variants < 1");
}

PoseSequence add_jitter(const PoseSequence& seq, double std_mm, std::uint64_t seed) {
    if (seq.empty()) throw EmptySequence();
    if (std_mm == 0.0) return seq;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, std_mm);
    PoseSequence out = seq;
    for (auto& frame : out.frames) {
        for (auto& joint : frame.joints) {
            joint.x() += gauss(rng);
            joint.y() += gauss(rng);
            joint.z() += gauss(rng);
        }
    }
    return out;
}

namespace {

// Left/right counterparts; C7 has none.
const std::vector<std::pair<JointId, JointId>>& symmetric_pairs() {
    static const std::vector<std::pair<JointId, JointId>> pairs = {
        {JointId::RSHO, JointId::LSHO}, {JointId::RMEL, JointId::LMEL},
        {JointId::RMWR, JointId::LMWR}, {JointId::RBWT, JointId::LBWT},
        {JointId::RKNE, JointId::LKNE}, {JointId::RTOE, JointId::LTOE}};
    return pairs;
}

std::pair<JointId, JointId> sample_pair(SwapPairPolicy policy, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (policy == SwapPairPolicy::MostlySymmetric && unit(rng) < 0.8) {
        const auto& pairs = symmetric_pairs();
        std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
        return pairs[pick(rng)];
    }
    std::uniform_int_distribution<int> pick(0, kNumJoints - 1);
    int a = pick(rng);
    int b = pick(rng);
    while (b == a) b = pick(rng);
    return {static_cast<JointId>(a), static_cast<JointId>(b)};
}

}  // namespace

std::vector<SwapEvent> sample_swap_events(double duration_s, const NoiseParams& params,
                                          std::uint64_t seed) {
    if (duration_s <= 0) throw std::invalid_argument("duration_s <= 0");
    std::mt19937_64 rng(seed);
    const double lambda = params.swap_rate_per_min * duration_s / 60.0;
    std::vector<SwapEvent> events;
    if (lambda <= 0) return events;
    std::poisson_distribution<int> count_dist(lambda);
    std::uniform_real_distribution<double> start_dist(0.0, duration_s);
    std::uniform_real_distribution<double> dur_dist(params.swap_dur_min_s,
                                                    params.swap_dur_max_s);
    const int count = count_dist(rng);
    events.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        SwapEvent ev;
        ev.start_s = start_dist(rng);
        ev.duration_s = dur_dist(rng);
        // Clip at the sequence end.
        ev.duration_s = std::min(ev.duration_s, duration_s - ev.start_s);
        std::tie(ev.joint_a, ev.joint_b) = sample_pair(params.pair_policy, rng);
        events.push_back(ev);
    }
    std::sort(events.begin(), events.end(),
              [](const SwapEvent& a, const SwapEvent& b) { return a.start_s < b.start_s; });
    return events;
}

PoseSequence apply_swaps(const PoseSequence& seq, const std::vector<SwapEvent>& events) {
    PoseSequence out = seq;
    const double duration = seq.duration_s();
    for (const auto& ev : events) {
        if (ev.joint_a == ev.joint_b) throw InvalidEvent("identical joints in swap");
        if (ev.start_s < 0 || ev.start_s > duration || ev.duration_s < 0) {
            throw InvalidEvent("swap event outside sequence");
        }
        const auto first =
            static_cast<std::size_t>(std::ceil(ev.start_s * seq.fps - 1e-9));
        const auto last = static_cast<std::size_t>(
            std::ceil((ev.start_s + ev.duration_s) * seq.fps - 1e-9));
        for (std::size_t t = first; t < std::min(last, out.frames.size()); ++t) {
            std::swap(out.frames[t][ev.joint_a], out.frames[t][ev.joint_b]);
        }
    }
    return out;
}

std::vector<NoiseVariant> generate_variants(const PoseSequence& seq,
                                            const NoiseParams& params) {
    if (seq.empty()) throw EmptySequence();
    params.validate();
    std::vector<NoiseVariant> variants;
    variants.reserve(static_cast<std::size_t>(params.n_variants));
    for (int i = 0; i < params.n_variants; ++i) {
        const std::uint64_t seed = params.base_seed + static_cast<std::uint64_t>(i);
        NoiseVariant v;
        v.events = sample_swap_events(seq.duration_s(), params, seed ^ 0x9e3779b97f4a7c15ULL);
        v.pose = apply_swaps(add_jitter(seq, params.jitter_std_mm, seed), v.events);
        variants.push_back(std::move(v));
    }
    return variants;
}

}  // namespace mapnet
