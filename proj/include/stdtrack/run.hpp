#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "stdtrack/metrics.hpp"
#include "stdtrack/pipeline.hpp"

namespace stdtrack {

/// Tracks a whole sequence from its frame-1 groundtruth box. The first row
/// carries the initialization box with Q = 0.
template <typename T>
std::vector<ResultRow> track_sequence(const Model<T>& model, const TrackerConfig& cfg, const Sequence& seq,
                                      HeadOverride<T> head_override = {}) {
    if (seq.frames.empty()) throw ContractError("track: empty sequence");
    Tracker<T> tracker(model, cfg);
    if (head_override) tracker.set_head_override(std::move(head_override));
    tracker.init(seq.frames[0], seq.groundtruth.at(0));
    std::vector<ResultRow> rows{{1, seq.groundtruth[0], 0.0}};
    for (std::size_t i = 1; i < seq.frames.size(); ++i) {
        const StepResult<T> r = tracker.step(seq.frames[i]);
        rows.push_back({r.frame, r.box, r.quality});
    }
    return rows;
}

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads; the first exception
/// is rethrown after all workers finish.
template <typename F>
void parallel_for(std::size_t n, std::size_t jobs, F&& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < jobs; ++w)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next++) < n;) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

template <typename T>
std::vector<std::vector<ResultRow>> track_all(const Model<T>& model, const TrackerConfig& cfg,
                                              const std::vector<Sequence>& seqs, std::size_t jobs = 1) {
    std::vector<std::vector<ResultRow>> out(seqs.size());
    parallel_for(seqs.size(), jobs, [&](std::size_t i) { out[i] = track_sequence(model, cfg, seqs[i]); });
    return out;
}

template <typename T>
EvalReport evaluate_model(const Model<T>& model, const TrackerConfig& cfg, const std::vector<Sequence>& seqs,
                          std::size_t jobs = 1) {
    const auto results = track_all(model, cfg, seqs, jobs);
    std::vector<SequenceScore> scores;
    for (std::size_t i = 0; i < seqs.size(); ++i)
        scores.push_back(score_sequence(seqs[i].name, result_boxes(results[i]), seqs[i].groundtruth));
    return summarize(std::move(scores));
}

struct CapacityRow {
    std::size_t capacity = 0;
    EvalReport report;
};

/// Evaluation repeated for each maintainer capacity.
template <typename T>
std::vector<CapacityRow> capacity_sweep(const Model<T>& model, TrackerConfig cfg, const std::vector<Sequence>& seqs,
                                        const std::vector<std::size_t>& capacities, std::size_t jobs = 1) {
    std::vector<CapacityRow> rows;
    for (std::size_t n : capacities) {
        cfg.capacity = n;
        rows.push_back({n, evaluate_model(model, cfg, seqs, jobs)});
    }
    return rows;
}

inline std::string format_capacity_table(const std::vector<CapacityRow>& rows, EvictionPolicy policy) {
    std::string s = "N\tAO\tSR_0.5\tSR_0.75\tpolicy\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.6f\t%.6f\t%s\n", r.capacity, r.report.ao, r.report.sr50,
                      r.report.sr75, to_string(policy));
        s += buf;
    }
    return s;
}

}  // namespace stdtrack
