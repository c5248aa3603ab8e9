#include "recat/config.hpp"

#include <cmath>
#include <functional>
#include <map>

#include <json.hpp>

#include "recat/binary_io.hpp"
#include "recat/error.hpp"

namespace recat {

namespace {

using nlohmann::json;

void flatten(const json& j, const std::string& prefix, std::map<std::string, json>& out) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it->is_object())
            flatten(*it, key, out);
        else
            out[key] = *it;
    }
}

double as_real(const std::string& key, const json& v) {
    if (!v.is_number()) throw ValidationError(key, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ValidationError(key, "must be finite");
    return d;
}

std::uint64_t as_count(const std::string& key, const json& v) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
        if (v.get<std::int64_t>() < 0) throw ValidationError(key, "must be >= 0");
        return static_cast<std::uint64_t>(v.get<std::int64_t>());
    }
    throw ValidationError(key, "expected a non-negative integer");
}

bool as_bool(const std::string& key, const json& v) {
    if (!v.is_boolean()) throw ValidationError(key, "expected true or false");
    return v.get<bool>();
}

std::string as_string(const std::string& key, const json& v) {
    if (!v.is_string()) throw ValidationError(key, "expected a string");
    return v.get<std::string>();
}

template <typename Parse>
auto as_enum(const std::string& key, const json& v, Parse parse) {
    try {
        return parse(as_string(key, v));
    } catch (const InvalidConfig& e) {
        throw ValidationError(key, e.what());
    }
}

using Setter = std::function<void(RunConfig&, const std::string&, const json&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"schedule.kind", [](RunConfig& c, const std::string& k, const json& v) { c.schedule_kind = as_enum(k, v, parse_schedule_kind); }},
        {"schedule.T", [](RunConfig& c, const std::string& k, const json& v) { c.schedule_T = static_cast<int>(as_count(k, v)); }},
        {"schedule.beta_start", [](RunConfig& c, const std::string& k, const json& v) { c.beta_start = as_real(k, v); }},
        {"schedule.beta_end", [](RunConfig& c, const std::string& k, const json& v) { c.beta_end = as_real(k, v); }},
        {"model.C", [](RunConfig& c, const std::string& k, const json& v) { c.model.latent_channels = as_count(k, v); }},
        {"model.H", [](RunConfig& c, const std::string& k, const json& v) { c.height = as_count(k, v); }},
        {"model.W", [](RunConfig& c, const std::string& k, const json& v) { c.width = as_count(k, v); }},
        {"model.F", [](RunConfig& c, const std::string& k, const json& v) { c.model.features = as_count(k, v); }},
        {"model.temb_dim", [](RunConfig& c, const std::string& k, const json& v) { c.model.temb_dim = as_count(k, v); }},
        {"model.groups", [](RunConfig& c, const std::string& k, const json& v) { c.model.groups = as_count(k, v); }},
        {"train.lr", [](RunConfig& c, const std::string& k, const json& v) { c.train.lr = as_real(k, v); }},
        {"train.weight_decay", [](RunConfig& c, const std::string& k, const json& v) { c.train.weight_decay = as_real(k, v); }},
        {"train.beta1", [](RunConfig& c, const std::string& k, const json& v) { c.train.beta1 = as_real(k, v); }},
        {"train.beta2", [](RunConfig& c, const std::string& k, const json& v) { c.train.beta2 = as_real(k, v); }},
        {"train.adam_eps", [](RunConfig& c, const std::string& k, const json& v) { c.train.adam_eps = as_real(k, v); }},
        {"train.grad_clip", [](RunConfig& c, const std::string& k, const json& v) { c.train.grad_clip_norm = as_real(k, v); }},
        {"train.batch", [](RunConfig& c, const std::string& k, const json& v) { c.train.batch_size = as_count(k, v); }},
        {"train.grad_accum", [](RunConfig& c, const std::string& k, const json& v) { c.train.grad_accum = as_count(k, v); }},
        {"train.steps", [](RunConfig& c, const std::string& k, const json& v) { c.train.steps = static_cast<std::int64_t>(as_count(k, v)); }},
        {"train.lambda", [](RunConfig& c, const std::string& k, const json& v) { c.train.lambda = as_real(k, v); }},
        {"train.dropout_p", [](RunConfig& c, const std::string& k, const json& v) { c.train.dropout_p = as_real(k, v); }},
        {"train.variant", [](RunConfig& c, const std::string& k, const json& v) { c.train.variant = as_enum(k, v, parse_variant); }},
        {"train.seed", [](RunConfig& c, const std::string& k, const json& v) { c.train.seed = as_count(k, v); }},
        {"train.dream", [](RunConfig& c, const std::string& k, const json& v) { c.train.dream = as_bool(k, v); }},
        {"train.loss_region", [](RunConfig& c, const std::string& k, const json& v) { c.train.loss_region = as_enum(k, v, parse_loss_region); }},
        {"train.checkpoint_every", [](RunConfig& c, const std::string& k, const json& v) { c.checkpoint_every = static_cast<std::int64_t>(as_count(k, v)); }},
        {"cfg.variant", [](RunConfig& c, const std::string& k, const json& v) { c.sampler.guidance.variant = as_enum(k, v, parse_variant); }},
        {"cfg.omega", [](RunConfig& c, const std::string& k, const json& v) { c.sampler.guidance.omega = as_real(k, v); }},
        {"sampler.steps", [](RunConfig& c, const std::string& k, const json& v) { c.sampler.steps = static_cast<int>(as_count(k, v)); }},
        {"sampler.kind", [](RunConfig& c, const std::string& k, const json& v) { c.sampler.sampler = as_enum(k, v, parse_sampler_kind); }},
        {"sampler.gt_injection", [](RunConfig& c, const std::string& k, const json& v) { c.sampler.gt_injection = as_bool(k, v); }},
        {"sampler.seed", [](RunConfig& c, const std::string& k, const json& v) { c.sampler.seed = as_count(k, v); }},
        {"data.n_train", [](RunConfig& c, const std::string& k, const json& v) { c.n_train = as_count(k, v); }},
        {"data.n_test", [](RunConfig& c, const std::string& k, const json& v) { c.n_test = as_count(k, v); }},
        {"data.n_patterns", [](RunConfig& c, const std::string& k, const json& v) { c.n_patterns = static_cast<std::uint32_t>(as_count(k, v)); }},
        {"data.seed", [](RunConfig& c, const std::string& k, const json& v) { c.data_seed = as_count(k, v); }},
        {"eval.embed_seed", [](RunConfig& c, const std::string& k, const json& v) { c.embed_seed = as_count(k, v); }},
        {"eval.embed_dim", [](RunConfig& c, const std::string& k, const json& v) { c.embed_dim = as_count(k, v); }},
    };
    return table;
}

}  // namespace

NoiseSchedule RunConfig::schedule() const { return build_schedule(schedule_kind, schedule_T, beta_start, beta_end); }

ToyDataParams RunConfig::data_params() const {
    return ToyDataParams{model.latent_channels, height, width, n_patterns};
}

EmbeddingSpec RunConfig::embedding() const {
    EmbeddingSpec e;
    e.seed = embed_seed;
    e.channels = model.latent_channels;
    e.height = height;
    e.width = width;
    e.dim = embed_dim;
    return e;
}

DenoiserInputSpec RunConfig::input_spec() const {
    return DenoiserInputSpec{model.latent_channels, height, width};
}

void RunConfig::validate() const {
    auto check = [](bool ok, const char* key, const char* what) {
        if (!ok) throw ValidationError(key, what);
    };
    check(schedule_T >= 1, "schedule.T", "must be >= 1");
    check(beta_start > 0.0 && beta_start < 1.0, "schedule.beta_start", "must be in (0, 1)");
    check(beta_end >= beta_start && beta_end < 1.0, "schedule.beta_end", "must be in [beta_start, 1)");
    check(model.latent_channels >= 1, "model.C", "must be >= 1");
    check(height >= 8 && height % 2 == 0, "model.H", "must be even and >= 8");
    check(width >= 8 && width % 2 == 0, "model.W", "must be even and >= 8");
    check(model.groups >= 1, "model.groups", "must be >= 1");
    check(model.features >= 1 && model.features % model.groups == 0, "model.F",
          "must be a positive multiple of model.groups");
    check(model.temb_dim >= 2 && model.temb_dim % 2 == 0, "model.temb_dim", "must be even and >= 2");
    check(model.timesteps == schedule_T, "schedule.T", "model timesteps differ from the schedule");
    train.validate();
    check(std::isfinite(sampler.guidance.omega) && sampler.guidance.omega >= 0.0, "cfg.omega", "must be >= 0");
    check(sampler.steps >= 1 && sampler.steps <= schedule_T, "sampler.steps", "must be in [1, schedule.T]");
    check(n_test % 2 == 0, "data.n_test", "must be even");
    check(n_patterns >= 2, "data.n_patterns", "must be >= 2");
    check(embed_dim >= 1, "eval.embed_dim", "must be >= 1");
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& [name, _] : setters()) k.push_back(name);
        return k;
    }();
    return keys;
}

RunConfig parse_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text.empty() ? std::string("{}") : json_text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw FormatError("config must be a JSON object");
    std::map<std::string, json> flat;
    flatten(doc, "", flat);
    RunConfig cfg;
    const auto& table = setters();
    for (const auto& [key, value] : flat) {
        const auto it = table.find(key);
        if (it == table.end()) throw ValidationError(key, "unknown key");
        it->second(cfg, key, value);
    }
    cfg.model.timesteps = cfg.schedule_T;
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) { return parse_config(bin::read_file(path)); }

std::string config_to_json(const RunConfig& c) {
    json j = json::object();
    j["schedule.kind"] = to_string(c.schedule_kind);
    j["schedule.T"] = c.schedule_T;
    j["schedule.beta_start"] = c.beta_start;
    j["schedule.beta_end"] = c.beta_end;
    j["model.C"] = c.model.latent_channels;
    j["model.H"] = c.height;
    j["model.W"] = c.width;
    j["model.F"] = c.model.features;
    j["model.temb_dim"] = c.model.temb_dim;
    j["model.groups"] = c.model.groups;
    j["train.lr"] = c.train.lr;
    j["train.weight_decay"] = c.train.weight_decay;
    j["train.beta1"] = c.train.beta1;
    j["train.beta2"] = c.train.beta2;
    j["train.adam_eps"] = c.train.adam_eps;
    j["train.grad_clip"] = c.train.grad_clip_norm;
    j["train.batch"] = c.train.batch_size;
    j["train.grad_accum"] = c.train.grad_accum;
    j["train.steps"] = c.train.steps;
    j["train.lambda"] = c.train.lambda;
    j["train.dropout_p"] = c.train.dropout_p;
    j["train.variant"] = to_string(c.train.variant);
    j["train.seed"] = c.train.seed;
    j["train.dream"] = c.train.dream;
    j["train.loss_region"] = to_string(c.train.loss_region);
    j["train.checkpoint_every"] = c.checkpoint_every;
    j["cfg.variant"] = to_string(c.sampler.guidance.variant);
    j["cfg.omega"] = c.sampler.guidance.omega;
    j["sampler.steps"] = c.sampler.steps;
    j["sampler.kind"] = to_string(c.sampler.sampler);
    j["sampler.gt_injection"] = c.sampler.gt_injection;
    j["sampler.seed"] = c.sampler.seed;
    j["data.n_train"] = c.n_train;
    j["data.n_test"] = c.n_test;
    j["data.n_patterns"] = c.n_patterns;
    j["data.seed"] = c.data_seed;
    j["eval.embed_seed"] = c.embed_seed;
    j["eval.embed_dim"] = c.embed_dim;
    return j.dump(2) + "\n";
}

}  // namespace recat
