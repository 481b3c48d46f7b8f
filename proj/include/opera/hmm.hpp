#pragma once

// Sparse log-domain Viterbi decoding shared by the pitch and note models.

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace opera::hmm {

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

struct Arc {
    std::size_t from = 0;
    double log_prob = kLogZero;
};

/// Transition structure stored as incoming arcs per destination state.
struct TransitionGraph {
    std::vector<double> log_initial;
    std::vector<std::vector<Arc>> incoming;

    std::size_t num_states() const noexcept { return log_initial.size(); }

    void resize(std::size_t states) {
        log_initial.assign(states, kLogZero);
        incoming.assign(states, {});
    }
    void add(std::size_t from, std::size_t to, double log_prob) {
        if (log_prob > kLogZero) incoming[to].push_back({from, log_prob});
    }
};

/// Row-major frames x states table of log emission probabilities.
struct EmissionTable {
    std::size_t frames = 0;
    std::size_t states = 0;
    std::vector<double> log_prob;

    EmissionTable() = default;
    EmissionTable(std::size_t f, std::size_t s) : frames(f), states(s), log_prob(f * s, kLogZero) {}

    double& at(std::size_t t, std::size_t s) { return log_prob[t * states + s]; }
    double at(std::size_t t, std::size_t s) const { return log_prob[t * states + s]; }
    std::span<double> row(std::size_t t) { return {log_prob.data() + t * states, states}; }
};

struct ViterbiResult {
    std::vector<std::size_t> path;
    double log_prob = kLogZero;
};

/// Most probable state path. Ties resolve to the lowest state index, both
/// for predecessors and for the final state. An impossible lattice yields an
/// empty path with log_prob -inf.
inline ViterbiResult viterbi(const TransitionGraph& graph, const EmissionTable& emissions) {
    const std::size_t n = graph.num_states();
    const std::size_t frames = emissions.frames;
    ViterbiResult out;
    if (frames == 0 || n == 0) return out;

    std::vector<double> score(n), next(n);
    std::vector<std::size_t> back(frames * n, 0);
    for (std::size_t s = 0; s < n; ++s) score[s] = graph.log_initial[s] + emissions.at(0, s);

    for (std::size_t t = 1; t < frames; ++t) {
        for (std::size_t s = 0; s < n; ++s) {
            const double e = emissions.at(t, s);
            if (e == kLogZero) {
                next[s] = kLogZero;
                continue;
            }
            double best = kLogZero;
            std::size_t arg = 0;
            for (const auto& arc : graph.incoming[s]) {
                const double v = score[arc.from] + arc.log_prob;
                if (v > best || (v == best && best > kLogZero && arc.from < arg)) {
                    best = v;
                    arg = arc.from;
                }
            }
            next[s] = best + e;
            back[t * n + s] = arg;
        }
        score.swap(next);
    }

    std::size_t last = 0;
    for (std::size_t s = 1; s < n; ++s)
        if (score[s] > score[last]) last = s;
    if (score[last] == kLogZero) return out;

    out.log_prob = score[last];
    out.path.resize(frames);
    out.path[frames - 1] = last;
    for (std::size_t t = frames - 1; t > 0; --t) out.path[t - 1] = back[t * n + out.path[t]];
    return out;
}

/// Log probability of a given path under the lattice; -inf if any step is
/// impossible.
inline double path_log_prob(const TransitionGraph& graph, const EmissionTable& emissions,
                            std::span<const std::size_t> path) {
    if (path.empty()) return kLogZero;
    double lp = graph.log_initial[path[0]] + emissions.at(0, path[0]);
    for (std::size_t t = 1; t < path.size(); ++t) {
        double arc_lp = kLogZero;
        for (const auto& arc : graph.incoming[path[t]])
            if (arc.from == path[t - 1]) {
                arc_lp = arc.log_prob;
                break;
            }
        lp += arc_lp + emissions.at(t, path[t]);
    }
    return lp;
}

}  // namespace opera::hmm
