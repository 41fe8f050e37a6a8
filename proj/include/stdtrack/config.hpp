#pragma once

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "stdtrack/pipeline.hpp"
#include "stdtrack/sequence.hpp"
#include "stdtrack/training.hpp"

namespace stdtrack {

/// Everything a run needs besides the seed. Serialized as plain `key=value` lines.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    TrackerConfig tracker;

    /// Applies one key. Unknown keys and malformed values raise ConfigError.
    void set(const std::string& key, const std::string& value) {
        auto it = fields().find(key);
        if (it == fields().end()) throw ConfigError("config: unknown key '" + key + "'");
        try {
            it->second.set(*this, value);
        } catch (const std::logic_error&) {
            throw ConfigError("config: bad value '" + value + "' for " + key);
        }
        sync();
    }

    std::string dump() const {
        std::ostringstream os;
        for (const auto& [k, f] : fields()) os << k << '=' << f.get(*this) << '\n';
        return os.str();
    }

    /// Capacity and policy live in both the tracker and training sections.
    void set_capacity(std::size_t n) {
        tracker.capacity = train.capacity = n;
    }
    void set_policy(EvictionPolicy p) { tracker.policy = train.policy = p; }

    void validate() const {
        model.encoder.validate();
        train.loss.validate();
        if (tracker.capacity == 0) throw ConfigError("config: capacity must be at least 1");
        if (model.encoder.dim % 2 != 0) throw ConfigError("config: dim must be even");
    }

    static RunConfig parse(std::istream& is) {
        RunConfig c;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto b = line.find_first_not_of(" \t\r");
            if (b == std::string::npos) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
            auto trim = [](std::string s) {
                const auto l = s.find_first_not_of(" \t\r"), r = s.find_last_not_of(" \t\r");
                return l == std::string::npos ? std::string() : s.substr(l, r - l + 1);
            };
            c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
        c.validate();
        return c;
    }

    static RunConfig load(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw ConfigError("cannot open config " + path);
        return parse(is);
    }

private:
    struct Field {
        std::function<void(RunConfig&, const std::string&)> set;
        std::function<std::string(const RunConfig&)> get;
    };

    void sync() {
        train.capacity = tracker.capacity;
        train.policy = tracker.policy;
        train.search_factor = tracker.search_factor;
        train.template_factor = tracker.template_factor;
    }

    static const std::map<std::string, Field>& fields() {
        static const std::map<std::string, Field> table = [] {
            std::map<std::string, Field> t;
            auto sz = [&](const std::string& k, auto member) {
                t[k] = {[member](RunConfig& c, const std::string& v) { member(c) = std::stoul(v); },
                        [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); }};
            };
            auto real = [&](const std::string& k, auto member) {
                t[k] = {[member](RunConfig& c, const std::string& v) { member(c) = std::stod(v); },
                        [member](const RunConfig& c) { return format_real(member(const_cast<RunConfig&>(c))); }};
            };
            auto flag = [&](const std::string& k, auto member) {
                t[k] = {[member](RunConfig& c, const std::string& v) {
                            if (v == "1" || v == "true") member(c) = true;
                            else if (v == "0" || v == "false") member(c) = false;
                            else throw std::invalid_argument(v);
                        },
                        [member](const RunConfig& c) {
                            return std::string(member(const_cast<RunConfig&>(c)) ? "true" : "false");
                        }};
            };
            // model
            sz("patch", [](RunConfig& c) -> std::size_t& { return c.model.encoder.patch; });
            sz("dim", [](RunConfig& c) -> std::size_t& { return c.model.encoder.dim; });
            sz("depth", [](RunConfig& c) -> std::size_t& { return c.model.encoder.depth; });
            sz("heads", [](RunConfig& c) -> std::size_t& { return c.model.encoder.heads; });
            sz("mlp_ratio", [](RunConfig& c) -> std::size_t& { return c.model.encoder.mlp_ratio; });
            t["template_size"] = {[](RunConfig& c, const std::string& v) {
                                      c.model.encoder.template_h = c.model.encoder.template_w = std::stoul(v);
                                  },
                                  [](const RunConfig& c) { return std::to_string(c.model.encoder.template_h); }};
            t["search_size"] = {[](RunConfig& c, const std::string& v) {
                                    c.model.encoder.search_h = c.model.encoder.search_w = std::stoul(v);
                                },
                                [](const RunConfig& c) { return std::to_string(c.model.encoder.search_h); }};
            sz("head_blocks", [](RunConfig& c) -> std::size_t& { return c.model.head_blocks; });
            flag("mask_enhance", [](RunConfig& c) -> bool& { return c.model.mask_enhance; });
            flag("fusion_positional", [](RunConfig& c) -> bool& { return c.model.fusion.positional; });
            flag("fusion_residual", [](RunConfig& c) -> bool& { return c.model.fusion.residual; });
            // tracking
            sz("capacity", [](RunConfig& c) -> std::size_t& { return c.tracker.capacity; });
            t["policy"] = {[](RunConfig& c, const std::string& v) { c.tracker.policy = parse_policy(v); },
                           [](const RunConfig& c) { return std::string(to_string(c.tracker.policy)); }};
            real("search_factor", [](RunConfig& c) -> double& { return c.tracker.search_factor; });
            real("template_factor", [](RunConfig& c) -> double& { return c.tracker.template_factor; });
            flag("hanning", [](RunConfig& c) -> bool& { return c.tracker.use_window; });
            // training
            sz("steps", [](RunConfig& c) -> std::size_t& { return c.train.steps; });
            sz("clip_length", [](RunConfig& c) -> std::size_t& { return c.train.clip.length; });
            sz("max_interval", [](RunConfig& c) -> std::size_t& { return c.train.clip.max_interval; });
            real("reverse_prob", [](RunConfig& c) -> double& { return c.train.clip.reverse_prob; });
            real("center_jitter", [](RunConfig& c) -> double& { return c.train.center_jitter; });
            real("scale_jitter_min", [](RunConfig& c) -> double& { return c.train.scale_jitter_min; });
            real("scale_jitter_max", [](RunConfig& c) -> double& { return c.train.scale_jitter_max; });
            real("target_sigma", [](RunConfig& c) -> double& { return c.train.target_sigma; });
            real("lambda_cls", [](RunConfig& c) -> double& { return c.train.loss.cls; });
            real("lambda_giou", [](RunConfig& c) -> double& { return c.train.loss.giou; });
            real("lambda_l1", [](RunConfig& c) -> double& { return c.train.loss.l1; });
            real("lr_encoder", [](RunConfig& c) -> double& { return c.train.optim.lr_encoder; });
            real("lr_rest", [](RunConfig& c) -> double& { return c.train.optim.lr_rest; });
            real("weight_decay", [](RunConfig& c) -> double& { return c.train.optim.weight_decay; });
            real("beta1", [](RunConfig& c) -> double& { return c.train.optim.beta1; });
            real("beta2", [](RunConfig& c) -> double& { return c.train.optim.beta2; });
            real("adam_eps", [](RunConfig& c) -> double& { return c.train.optim.eps; });
            real("decay_start", [](RunConfig& c) -> double& { return c.train.decay_start; });
            real("final_lr_factor", [](RunConfig& c) -> double& { return c.train.final_lr_factor; });
            real("grad_clip", [](RunConfig& c) -> double& { return c.train.grad_clip; });
            flag("detach_tokens", [](RunConfig& c) -> bool& { return c.train.detach_tokens; });
            flag("bn_batch_stats", [](RunConfig& c) -> bool& { return c.train.bn_batch_stats; });
            return t;
        }();
        return table;
    }
};

}  // namespace stdtrack
