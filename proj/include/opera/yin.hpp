#pragma once

// YIN cumulative-mean-normalised difference and probabilistic threshold
// candidate extraction.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "opera/error.hpp"

namespace opera {

/// d'(0) = 1; d'(tau) = d(tau) * tau / sum_{j=1..tau} d(j), with the
/// difference d(tau) = sum_j (x_j - x_{j+tau})^2 integrated over the first
/// frame.size() - max_lag samples. Returns max_lag + 1 values.
inline std::vector<double> yin_cmndf(std::span<const double> frame, std::size_t max_lag) {
    if (max_lag < 2 || frame.size() < 2 * max_lag)
        throw WindowTooShort("YIN window of " + std::to_string(frame.size()) + " samples is shorter than twice the lag " +
                             std::to_string(max_lag));
    const std::size_t width = frame.size() - max_lag;
    std::vector<double> out(max_lag + 1, 1.0);
    double running = 0.0;
    for (std::size_t tau = 1; tau <= max_lag; ++tau) {
        double d = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
            const double diff = frame[j] - frame[j + tau];
            d += diff * diff;
        }
        running += d;
        out[tau] = running > 0.0 ? d * static_cast<double>(tau) / running : 1.0;
    }
    return out;
}

/// Discrete prior over YIN thresholds: `count` thresholds evenly spaced on
/// (0, max_threshold], weighted by Beta(beta_a, beta_b) mass per bin.
struct ThresholdPrior {
    int count = 20;
    double max_threshold = 0.5;
    double beta_a = 2.0;
    double beta_b = 34.0 / 3.0;  // mean 0.15

    std::vector<double> thresholds() const {
        std::vector<double> t(count);
        for (int k = 0; k < count; ++k) t[k] = max_threshold * (k + 1) / count;
        return t;
    }

    std::vector<double> weights() const {
        std::vector<double> w(count);
        double prev = 0.0;
        double total = 0.0;
        for (int k = 0; k < count; ++k) {
            const double x = max_threshold * (k + 1) / count;
            const double cdf = boost::math::ibeta(beta_a, beta_b, x);
            w[k] = cdf - prev;
            prev = cdf;
            total += w[k];
        }
        for (auto& v : w) v /= total;
        return w;
    }
};

struct PitchCandidate {
    double f0_hz = 0.0;
    double salience = 0.0;
};

struct PitchCandidateFrame {
    std::vector<PitchCandidate> candidates;
    double voiced_prob = 0.0;
};

struct CandidateSearch {
    double sample_rate_hz = 44100.0;
    double min_f0_hz = 60.0;
    double max_f0_hz = 1100.0;
};

/// Each threshold picks the first local minimum of the CMNDF that dips
/// below it inside the lag range; the candidate's salience is the prior
/// mass of the thresholds that chose it.
inline PitchCandidateFrame extract_candidates(std::span<const double> cmndf, const ThresholdPrior& prior,
                                              const CandidateSearch& search) {
    PitchCandidateFrame out;
    if (cmndf.size() < 3) return out;
    const auto lag_min = std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(search.sample_rate_hz / search.max_f0_hz)));
    const auto lag_max = std::min<std::size_t>(cmndf.size() - 2,
                                               static_cast<std::size_t>(std::ceil(search.sample_rate_hz / search.min_f0_hz)));
    if (lag_min > lag_max) return out;

    const auto thresholds = prior.thresholds();
    const auto weights = prior.weights();
    std::vector<std::pair<std::size_t, double>> picked;  // (lag, mass)

    for (std::size_t k = 0; k < thresholds.size(); ++k) {
        std::size_t tau = lag_min;
        while (tau <= lag_max && cmndf[tau] >= thresholds[k]) ++tau;
        if (tau > lag_max) continue;
        while (tau + 1 <= lag_max && cmndf[tau + 1] < cmndf[tau]) ++tau;
        auto it = std::find_if(picked.begin(), picked.end(), [&](const auto& p) { return p.first == tau; });
        if (it == picked.end())
            picked.emplace_back(tau, weights[k]);
        else
            it->second += weights[k];
    }

    for (const auto& [tau, mass] : picked) {
        const double a = cmndf[tau - 1];
        const double b = cmndf[tau];
        const double c = cmndf[tau + 1];
        const double denom = a - 2.0 * b + c;
        double shift = denom > 0.0 ? 0.5 * (a - c) / denom : 0.0;
        shift = std::clamp(shift, -0.5, 0.5);
        const double f0 = search.sample_rate_hz / (static_cast<double>(tau) + shift);
        if (f0 < search.min_f0_hz || f0 > search.max_f0_hz) continue;
        out.candidates.push_back({f0, mass});
        out.voiced_prob += mass;
    }
    out.voiced_prob = std::min(out.voiced_prob, 1.0);
    return out;
}

}  // namespace opera
