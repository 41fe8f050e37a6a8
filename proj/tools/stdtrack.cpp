// stdtrack: generate, train, reparam, track, eval, verify.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "stdtrack/config.hpp"
#include "stdtrack/run.hpp"
#include "stdtrack/verify.hpp"
#include "stdtrack/weights.hpp"

namespace fs = std::filesystem;
using namespace stdtrack;

namespace {

struct Globals {
    std::uint64_t seed = 1;
    std::string config;
    std::string policy;
    std::size_t capacity = 0;
    std::size_t jobs = 1;
};

// Effective run configuration: defaults, then the config file (or the
// weights sidecar when no file is given), then flag overrides.
RunConfig resolve_config(const Globals& g, const std::string& weights = {}) {
    RunConfig rc;
    if (!g.config.empty())
        rc = RunConfig::load(g.config);
    else if (!weights.empty() && fs::exists(weights + ".cfg"))
        rc = RunConfig::load(weights + ".cfg");
    if (!g.policy.empty()) rc.set_policy(parse_policy(g.policy));
    if (g.capacity > 0) rc.set_capacity(g.capacity);
    rc.validate();
    return rc;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << text;
}

std::vector<Sequence> load_sequences(const std::vector<std::string>& dirs) {
    std::vector<Sequence> out;
    for (const auto& d : dirs) out.push_back(load_sequence(d));
    return out;
}

int cmd_generate(const Globals& g, const std::string& spec_path, const std::string& out) {
    const SyntheticSpec spec = SyntheticSpec::load(spec_path);
    const SyntheticSequence s = generate_synthetic(spec, g.seed);
    save_synthetic(out, s);
    std::printf("wrote %zu frames to %s (%zu occluded)\n", s.sequence.size(), out.c_str(), s.occlusions.size());
    return 0;
}

int cmd_train(const Globals& g, const std::vector<std::string>& data, const std::string& out, std::string log_path) {
    const RunConfig rc = resolve_config(g);
    const std::vector<Sequence> seqs = load_sequences(data);
    Model<Real> model(rc.model, g.seed);
    Trainer<Real> trainer(model, rc.train);
    if (log_path.empty()) log_path = out + ".log";
    std::ofstream log(log_path);
    if (!log) throw std::runtime_error("cannot open " + log_path + " for writing");
    log << "step,loss,loss_cls,loss_giou,loss_l1,lr\n";
    Rng rng(g.seed);
    const auto t0 = std::chrono::steady_clock::now();
    trainer.fit(seqs, rng, [&](std::size_t step, const StepLoss& l) {
        log << step << ',' << l.total << ',' << l.cls << ',' << l.giou << ',' << l.l1 << ',' << l.lr << '\n';
        if (step % 50 == 0 || step + 1 == rc.train.steps)
            std::printf("step %zu/%zu loss %.4f (cls %.4f giou %.4f l1 %.4f)\n", step + 1, rc.train.steps, l.total,
                        l.cls, l.giou, l.l1);
    });
    save_weights(model, out);
    write_text(out + ".cfg", rc.dump());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("trained %zu steps in %.1fs, weights %s\n", trainer.step_count(), secs, out.c_str());
    return 0;
}

int cmd_reparam(const Globals& g, const std::string& in, const std::string& out, std::size_t probes) {
    const RunConfig rc = resolve_config(g, in);
    const Model<Real> model = load_weights<Real>(rc.model, in);
    if (model.head().is_merged()) throw std::runtime_error(in + " already holds a merged head");
    const Model<Real> merged = model.reparameterized();
    const EncoderConfig& ec = rc.model.encoder;
    Rng rng(g.seed);
    const double dev = reparam_deviation(model.head(), merged.head(), probes, ec.search_grid_h(), ec.search_grid_w(), rng);
    std::printf("max_abs_deviation=%.3e over %zu probes\n", dev, probes);
    if (!(dev <= 1e-4)) {
        std::fprintf(stderr, "stdtrack: error: re-parameterization deviation %.3e exceeds 1e-4\n", dev);
        return 1;
    }
    save_weights(merged, out);
    write_text(out + ".cfg", rc.dump());
    std::printf("wrote merged weights to %s\n", out.c_str());
    return 0;
}

int cmd_track(const Globals& g, const std::string& weights, const std::vector<std::string>& dirs,
              const std::string& out, bool oracle_head) {
    // The oracle head replaces the network's prediction, so weights are optional with it.
    if (weights.empty() && !oracle_head) throw std::runtime_error("track needs --weights (or --oracle-head)");
    const RunConfig rc = resolve_config(g, weights);
    const std::vector<Sequence> seqs = load_sequences(dirs);
    const Model<Real> model = weights.empty() ? Model<Real>(rc.model, g.seed) : load_weights<Real>(rc.model, weights);
    const std::size_t gh = rc.model.encoder.search_grid_h(), gw = rc.model.encoder.search_grid_w();

    std::vector<std::vector<ResultRow>> results(seqs.size());
    parallel_for(seqs.size(), g.jobs, [&](std::size_t i) {
        HeadOverride<Real> ov;
        if (oracle_head) {
            const Sequence* s = &seqs[i];
            ov = [s, gh, gw](const CropParams& crop, std::size_t frame) {
                return oracle_head_output<Real>(s->groundtruth.at(frame - 1), crop, gh, gw);
            };
        }
        results[i] = track_sequence(model, rc.tracker, seqs[i], ov);
    });
    if (seqs.size() == 1 && !fs::is_directory(out)) {
        write_results(out, results[0]);
        std::printf("wrote %zu rows to %s\n", results[0].size(), out.c_str());
    } else {
        fs::create_directories(out);
        for (std::size_t i = 0; i < seqs.size(); ++i)
            write_results((fs::path(out) / (seqs[i].name + ".txt")).string(), results[i]);
        std::printf("wrote results for %zu sequences to %s\n", seqs.size(), out.c_str());
    }
    return 0;
}

// groundtruth may name a groundtruth.txt file or a sequence directory.
std::vector<BBox> load_groundtruth(const std::string& p) {
    return fs::is_directory(p) ? read_groundtruth((fs::path(p) / "groundtruth.txt").string()) : read_groundtruth(p);
}

int cmd_eval(const std::vector<std::string>& results, const std::vector<std::string>& gts, const std::string& report) {
    if (results.size() != gts.size())
        throw std::runtime_error("eval: " + std::to_string(results.size()) + " result files for " +
                                 std::to_string(gts.size()) + " groundtruths");
    std::vector<SequenceScore> scores;
    for (std::size_t i = 0; i < results.size(); ++i)
        scores.push_back(score_sequence(fs::path(results[i]).stem().string(), result_boxes(read_results(results[i])),
                                        load_groundtruth(gts[i])));
    const EvalReport r = summarize(std::move(scores));
    std::cout << r.text() << r.key_values();
    if (!report.empty()) write_text(report, r.text() + r.key_values());
    return 0;
}

int cmd_verify(const Globals& g, bool sweep, const std::string& weights, std::vector<std::string> data,
               const std::vector<std::size_t>& capacities, bool skip_props) {
    bool ok = true;
    if (!skip_props) {
        const auto checks = run_property_suite(g.seed, &std::cout);
        std::size_t failed = 0;
        for (const auto& c : checks) failed += !c.pass;
        std::printf("property suite: %zu/%zu passed\n", checks.size() - failed, checks.size());
        ok = failed == 0;
    }
    if (sweep) {
        const RunConfig rc = resolve_config(g, weights);
        const Model<Real> model = weights.empty() ? Model<Real>(rc.model, g.seed) : load_weights<Real>(rc.model, weights);
        std::vector<Sequence> seqs;
        if (data.empty()) {
            // Default evaluation set: two generated sequences with an occlusion and a distractor.
            for (std::uint64_t s = 0; s < 2; ++s) {
                SyntheticSpec spec;
                spec.name = "sweep" + std::to_string(s);
                spec.frames = 40;
                spec.motion = s == 0 ? MotionKind::sinusoidal : MotionKind::random_walk;
                spec.occluded = {20};
                spec.distractors = 1;
                seqs.push_back(generate_synthetic(spec, g.seed + s).sequence);
            }
        } else {
            seqs = load_sequences(data);
        }
        const auto rows = capacity_sweep(model, rc.tracker, seqs, capacities, g.jobs);
        std::cout << "capacity sweep (" << seqs.size() << " sequences)\n" << format_capacity_table(rows, rc.tracker.policy);
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale spatiotemporal token tracker"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
    app.add_option("--config", g.config, "Run configuration (key=value file)");
    app.add_option("--policy", g.policy, "Token eviction policy")->check(CLI::IsMember({"quality", "fifo"}));
    app.add_option("--capacity", g.capacity, "Token maintainer capacity")->check(CLI::PositiveNumber);
    app.add_option("--jobs", g.jobs, "Sequences tracked in parallel")->check(CLI::PositiveNumber);

    std::string spec, out, log, weights, report, in;
    std::vector<std::string> data, results, gts;
    std::size_t probes = 100;
    bool oracle = false, sweep = false, no_props = false;
    std::vector<std::size_t> capacities{2, 4, 6, 8};

    auto* gen = app.add_subcommand("generate", "Render a synthetic sequence from a spec file");
    gen->add_option("spec", spec, "Spec file")->required()->check(CLI::ExistingFile);
    gen->add_option("-o,--out", out, "Output sequence directory")->required();

    auto* train = app.add_subcommand("train", "Train a model on sequences");
    train->add_option("-d,--data", data, "Sequence directories")->required()->check(CLI::ExistingDirectory);
    train->add_option("-o,--out", out, "Output weights file")->required();
    train->add_option("--log", log, "Loss log (default <out>.log)");

    auto* rep = app.add_subcommand("reparam", "Collapse the head of a training checkpoint");
    rep->add_option("in", in, "Training-form weights")->required()->check(CLI::ExistingFile);
    rep->add_option("-o,--out", out, "Merged weights file")->required();
    rep->add_option("--probes", probes, "Random probes for the equivalence check")->capture_default_str();

    auto* track = app.add_subcommand("track", "Track sequences and write results files");
    track->add_option("-w,--weights", weights, "Weights file")->check(CLI::ExistingFile);
    track->add_option("-s,--sequence", data, "Sequence directories")->required()->check(CLI::ExistingDirectory);
    track->add_option("-o,--out", out, "Results file (one sequence) or directory")->required();
    track->add_flag("--oracle-head", oracle, "Replace head outputs with groundtruth-derived maps");

    auto* ev = app.add_subcommand("eval", "Score results against groundtruth");
    ev->add_option("-r,--results", results, "Results files")->required()->check(CLI::ExistingFile);
    ev->add_option("-g,--groundtruth", gts, "Groundtruth files or sequence directories")->required()->check(CLI::ExistingPath);
    ev->add_option("--report", report, "Also write the report here");

    auto* ver = app.add_subcommand("verify", "Run the property oracle suite");
    ver->add_flag("--sweep", sweep, "Also sweep maintainer capacity and print an AO table");
    ver->add_flag("--no-properties", no_props, "Skip the property suite");
    ver->add_option("-w,--weights", weights, "Weights for the sweep (default: fresh model)")->check(CLI::ExistingFile);
    ver->add_option("-d,--data", data, "Sweep sequences (default: generated)")->check(CLI::ExistingDirectory);
    ver->add_option("--capacities", capacities, "Capacities to sweep")->delimiter(',')->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "stdtrack: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (*gen) return cmd_generate(g, spec, out);
        if (*train) return cmd_train(g, data, out, log);
        if (*rep) return cmd_reparam(g, in, out, probes);
        if (*track) return cmd_track(g, weights, data, out, oracle);
        if (*ev) return cmd_eval(results, gts, report);
        if (*ver) return cmd_verify(g, sweep, weights, data, capacities, no_props);
    } catch (const std::exception& e) {
        std::string what = e.what();
        std::replace(what.begin(), what.end(), '\n', ' ');
        std::cerr << "stdtrack: error: " << what << '\n';
        return 1;
    }
    return 2;
}
