#pragma once

// Phoneme duration allocation inside a note. Given a duration mixture per
// phoneme and the note length T (frames), every allocator returns integer
// durations that sum to T exactly and are at least one frame each.
//
// The Lagrange allocator maximises sum_i log N(d_i; mu_i, sigma_i^2) subject
// to sum_i d_i = T, using the maximum-weight component of each mixture. The
// stationary point is d_i = mu_i + sigma_i^2 * alpha with
// alpha = (T - sum mu) / sum sigma^2.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "opera/error.hpp"

namespace opera {

inline constexpr double kMinPhonemeFrames = 1.0;

struct MixtureComponent {
    double weight = 1.0;
    double mean_frames = 1.0;
    double std_frames = 0.0;
    bool operator==(const MixtureComponent&) const = default;
};

struct PhonemeDurationDistribution {
    std::string phoneme;
    std::vector<MixtureComponent> components;

    void validate() const {
        if (components.empty()) throw InvalidDistribution("'" + phoneme + "': mixture has no components");
        double total = 0.0;
        for (const auto& c : components) {
            if (!(c.weight >= 0.0 && c.weight <= 1.0))
                throw InvalidDistribution("'" + phoneme + "': component weight outside [0,1]");
            if (!(c.std_frames >= 0.0)) throw InvalidDistribution("'" + phoneme + "': negative std");
            if (!(c.mean_frames > 0.0)) throw InvalidDistribution("'" + phoneme + "': mean must be positive");
            total += c.weight;
        }
        if (std::abs(total - 1.0) > 1e-6) throw InvalidDistribution("'" + phoneme + "': weights do not sum to 1");
    }

    double mixture_mean() const {
        double m = 0.0;
        for (const auto& c : components) m += c.weight * c.mean_frames;
        return m;
    }

    bool operator==(const PhonemeDurationDistribution&) const = default;
};

inline PhonemeDurationDistribution single_gaussian(std::string phoneme, double mean, double std) {
    return {std::move(phoneme), {{1.0, mean, std}}};
}

struct NoteSpan {
    std::int64_t total_frames = 1;
    std::vector<PhonemeDurationDistribution> distributions;

    std::size_t size() const noexcept { return distributions.size(); }
};

enum class AllocationMethod { Lagrange, FittingHeuristic, MeanFit };

inline std::string_view to_string(AllocationMethod m) {
    switch (m) {
        case AllocationMethod::Lagrange: return "lagrange";
        case AllocationMethod::FittingHeuristic: return "heuristic";
        case AllocationMethod::MeanFit: return "meanfit";
    }
    return "lagrange";
}

struct AllocationResult {
    std::vector<std::int64_t> durations_frames;
    std::vector<double> durations_real;
    double alpha = 0.0;
    std::vector<std::size_t> clamped_indices;  // ascending
    AllocationMethod method = AllocationMethod::Lagrange;
    bool proportional_fallback = false;
    int iterations = 0;
};

struct GaussianEstimate {
    double mean = 0.0;
    double std = 0.0;
};

/// Component with the largest weight; the lowest index wins ties.
inline GaussianEstimate select_max_weight_component(const PhonemeDurationDistribution& dist) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < dist.components.size(); ++k)
        if (dist.components[k].weight > dist.components[best].weight) best = k;
    const auto& c = dist.components.at(best);
    return {c.mean_frames, c.std_frames};
}

inline double gaussian_log_pdf(double x, double mean, double std) {
    const double z = (x - mean) / std;
    return -0.5 * z * z - std::log(std) - 0.5 * std::log(2.0 * std::numbers::pi);
}

/// log sum_k w_k N(d; mu_k, sigma_k^2), evaluated with log-sum-exp.
inline double mixture_log_likelihood(const PhonemeDurationDistribution& dist, double d) {
    double peak = -std::numeric_limits<double>::infinity();
    std::vector<double> terms;
    terms.reserve(dist.components.size());
    for (const auto& c : dist.components) {
        if (!(c.std_frames > 0.0))
            throw DegenerateComponent("'" + dist.phoneme + "': component with zero std has no density");
        const double t = c.weight > 0.0 ? std::log(c.weight) + gaussian_log_pdf(d, c.mean_frames, c.std_frames)
                                        : -std::numeric_limits<double>::infinity();
        terms.push_back(t);
        peak = std::max(peak, t);
    }
    if (!std::isfinite(peak)) return peak;
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - peak);
    return peak + std::log(acc);
}

/// Largest-remainder rounding onto the integer frame grid. The spare frames
/// go to the largest fractional parts, earlier index first on ties.
inline std::vector<std::int64_t> quantize_to_frames(std::span<const double> real_durations, std::int64_t total_frames) {
    constexpr double kSnap = 1e-9;
    const std::size_t n = real_durations.size();
    std::vector<std::int64_t> out(n);
    std::vector<double> remainder(n);
    std::int64_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double floored = std::floor(real_durations[i] + kSnap);
        out[i] = std::max<std::int64_t>(1, static_cast<std::int64_t>(floored));
        remainder[i] = real_durations[i] - static_cast<double>(out[i]);
        assigned += out[i];
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    std::int64_t spare = total_frames - assigned;
    for (std::size_t k = 0; spare > 0 && n > 0; k = (k + 1) % n, --spare) ++out[order[k]];
    // Only reachable when the inputs do not sum to T.
    while (spare < 0) {
        bool progressed = false;
        for (std::size_t k = n; k-- > 0 && spare < 0;) {
            if (out[order[k]] > 1) {
                --out[order[k]];
                ++spare;
                progressed = true;
            }
        }
        if (!progressed) break;
    }
    return out;
}

namespace duration_detail {

inline void check_feasible(std::int64_t total_frames, std::size_t phonemes) {
    if (phonemes == 0) throw InfeasibleNote("note span has no phonemes");
    if (total_frames < static_cast<std::int64_t>(phonemes))
        throw InfeasibleNote("note of " + std::to_string(total_frames) + " frames cannot hold " +
                             std::to_string(phonemes) + " phonemes of at least one frame");
}

inline void check_sum(const AllocationResult& r, std::int64_t total_frames) {
    const auto sum = std::accumulate(r.durations_frames.begin(), r.durations_frames.end(), std::int64_t{0});
    if (sum != total_frames) throw InvariantViolation("allocation does not sum to the note length");
    for (auto d : r.durations_frames)
        if (d < 1) throw InvariantViolation("allocation produced a duration below one frame");
}

// Proportional split of `total` by `weights`, clamping undersized shares to
// one frame and re-splitting the rest. Uniform when all weights are zero.
inline std::vector<double> proportional_fit(std::span<const double> weights, double total,
                                            std::vector<std::size_t>* clamped = nullptr) {
    const std::size_t n = weights.size();
    std::vector<double> d(n, 0.0);
    std::vector<bool> active(n, true);
    for (std::size_t iter = 0; iter <= n; ++iter) {
        double budget = total;
        double weight_sum = 0.0;
        std::size_t n_active = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (active[i]) {
                weight_sum += weights[i];
                ++n_active;
            } else {
                budget -= kMinPhonemeFrames;
            }
        }
        if (n_active == 0) break;
        for (std::size_t i = 0; i < n; ++i)
            if (active[i])
                d[i] = weight_sum > 0.0 ? budget * weights[i] / weight_sum : budget / static_cast<double>(n_active);
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i)
            if (active[i] && d[i] < kMinPhonemeFrames) {
                d[i] = kMinPhonemeFrames;
                active[i] = false;
                changed = true;
                if (clamped) clamped->push_back(i);
            }
        if (!changed) break;
    }
    if (clamped) std::sort(clamped->begin(), clamped->end());
    return d;
}

}  // namespace duration_detail

/// Constrained maximum-likelihood allocation. Phonemes whose solution falls
/// below one frame are clamped to one frame and removed from the active set,
/// and the system is re-solved over the remaining frames. A span whose
/// active phonemes all have zero variance is split proportionally to the
/// means instead.
inline AllocationResult allocate_lagrange(const NoteSpan& span) {
    const std::size_t m = span.size();
    duration_detail::check_feasible(span.total_frames, m);

    std::vector<double> mean(m), var(m);
    for (std::size_t i = 0; i < m; ++i) {
        span.distributions[i].validate();
        const auto g = select_max_weight_component(span.distributions[i]);
        mean[i] = g.mean;
        var[i] = g.std * g.std;
    }

    AllocationResult r;
    r.method = AllocationMethod::Lagrange;
    r.durations_real.assign(m, 0.0);
    std::vector<bool> active(m, true);
    const double total = static_cast<double>(span.total_frames);

    for (std::size_t iter = 0; iter < m; ++iter) {
        ++r.iterations;
        double budget = total;
        double mean_sum = 0.0;
        double var_sum = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            if (!active[i]) {
                budget -= kMinPhonemeFrames;
                continue;
            }
            mean_sum += mean[i];
            var_sum += var[i];
        }

        if (var_sum > 0.0) {
            r.alpha = (budget - mean_sum) / var_sum;
            r.proportional_fallback = false;
            for (std::size_t i = 0; i < m; ++i)
                if (active[i]) r.durations_real[i] = mean[i] + var[i] * r.alpha;
        } else {
            r.alpha = 0.0;
            r.proportional_fallback = true;
            std::vector<double> w;
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < m; ++i)
                if (active[i]) {
                    w.push_back(mean[i]);
                    idx.push_back(i);
                }
            std::vector<std::size_t> inner_clamped;
            auto d = duration_detail::proportional_fit(w, budget, &inner_clamped);
            for (std::size_t k = 0; k < idx.size(); ++k) r.durations_real[idx[k]] = d[k];
            for (auto k : inner_clamped) r.clamped_indices.push_back(idx[k]);
            break;
        }

        bool clamped_any = false;
        for (std::size_t i = 0; i < m; ++i)
            if (active[i] && r.durations_real[i] < kMinPhonemeFrames) {
                r.durations_real[i] = kMinPhonemeFrames;
                active[i] = false;
                r.clamped_indices.push_back(i);
                clamped_any = true;
            }
        if (!clamped_any) break;
    }
    std::sort(r.clamped_indices.begin(), r.clamped_indices.end());

    r.durations_frames = quantize_to_frames(r.durations_real, span.total_frames);
    duration_detail::check_sum(r, span.total_frames);
    return r;
}

/// Parameters of the fitting-heuristic baseline. Non-primary phonemes take
/// min(mu, r0 * mu), scaled down if they would exceed (1 - reserve) * T;
/// the primary phoneme absorbs the remainder.
struct FittingHeuristicOptions {
    double r0 = 1.0;
    double reserve = 0.0;
};

inline AllocationResult fit_primary_residual(std::span<const double> means, std::int64_t total_frames,
                                             std::size_t primary_index, const FittingHeuristicOptions& options,
                                             AllocationMethod method) {
    const std::size_t m = means.size();
    duration_detail::check_feasible(total_frames, m);
    if (primary_index >= m) throw InfeasibleNote("primary phoneme index out of range");
    const double total = static_cast<double>(total_frames);

    AllocationResult r;
    r.method = method;
    r.iterations = 1;
    r.durations_real.assign(m, 0.0);

    double others = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (i == primary_index) continue;
        r.durations_real[i] = std::min(means[i], options.r0 * means[i]);
        others += r.durations_real[i];
    }
    const double budget = (1.0 - options.reserve) * total;
    if (others > budget && others > 0.0) {
        const double scale = budget / others;
        for (std::size_t i = 0; i < m; ++i)
            if (i != primary_index) r.durations_real[i] *= scale;
        others = budget;
    }
    const double residual = total - others;
    bool feasible = residual >= kMinPhonemeFrames;
    for (std::size_t i = 0; i < m; ++i)
        if (i != primary_index && r.durations_real[i] < kMinPhonemeFrames) feasible = false;

    if (feasible) {
        r.durations_real[primary_index] = residual;
    } else {
        r.proportional_fallback = true;
        r.durations_real = duration_detail::proportional_fit(means, total, &r.clamped_indices);
    }
    r.durations_frames = quantize_to_frames(r.durations_real, total_frames);
    duration_detail::check_sum(r, total_frames);
    return r;
}

/// Rule-based baseline: the phoneme at `primary_index` absorbs whatever the
/// other phonemes' mean durations leave over. Falls back to a proportional
/// rescale when the remainder is under one frame.
inline AllocationResult allocate_fitting_heuristic(const NoteSpan& span, std::size_t primary_index,
                                                   const FittingHeuristicOptions& options = {}) {
    duration_detail::check_feasible(span.total_frames, span.size());
    std::vector<double> means;
    means.reserve(span.size());
    for (const auto& d : span.distributions) {
        d.validate();
        means.push_back(select_max_weight_component(d).mean);
    }
    return fit_primary_residual(means, span.total_frames, primary_index, options, AllocationMethod::FittingHeuristic);
}

/// The second phoneme is the primary vowel; single-phoneme notes use the first.
inline std::size_t default_primary_index(std::size_t phonemes) { return phonemes > 1 ? 1 : 0; }

/// Constrained log-likelihood of a real-valued allocation under the
/// maximum-weight components.
inline double constrained_log_likelihood(const NoteSpan& span, std::span<const double> durations) {
    double ll = 0.0;
    for (std::size_t i = 0; i < span.size(); ++i) {
        const auto g = select_max_weight_component(span.distributions[i]);
        ll += gaussian_log_pdf(durations[i], g.mean, g.std);
    }
    return ll;
}

}  // namespace opera
