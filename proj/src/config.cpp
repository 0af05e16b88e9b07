#include "dufold/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "dufold/errors.hpp"

namespace dufold {

namespace {

enum class VType { Int, Real, Bool, Str };

struct Entry {
    std::string key;
    VType type;
    std::string def;
};

constexpr int kMaxTasks = 8;

std::vector<Entry> registry() {
    std::vector<Entry> r = {
        {"seed", VType::Int, "0"},
        {"data.kind", VType::Str, "shapes"},
        {"data.size", VType::Int, "64"},
        {"data.count", VType::Int, "272"},
        {"data.path", VType::Str, ""},
        {"schedule.family", VType::Str, "edm"},
        {"schedule.sigma_min", VType::Real, "0.002"},
        {"schedule.sigma_max", VType::Real, "80"},
        {"schedule.rho", VType::Real, "7"},
        {"schedule.beta_min", VType::Real, "0.1"},
        {"schedule.beta_max", VType::Real, "20"},
        {"schedule.sigma_data", VType::Real, "0.5"},
        {"denoiser.k", VType::Int, "4"},
        {"denoiser.channels", VType::Int, "8"},
        {"denoiser.in_channels", VType::Int, "1"},
        {"denoiser.embed_dim", VType::Int, "16"},
        {"denoiser.untied", VType::Bool, "false"},
        {"denoiser.tau_init", VType::Real, "0.25"},
        {"denoiser.tau_init_hi", VType::Real, "1.5"},
        {"denoiser.gamma_init", VType::Real, "0.5"},
        {"denoiser.gamma_init_hi", VType::Real, "0.6"},
        {"train.lr", VType::Real, "0.0002"},
        {"train.batch_size", VType::Int, "4"},
        {"train.total_steps", VType::Int, "5000"},
        {"train.sigma_y_lo", VType::Real, "0"},
        {"train.sigma_y_hi", VType::Real, "0.1"},
        {"train.ema_decay", VType::Real, "0.999"},
        {"train.checkpoint_every", VType::Int, "1000"},
        {"sampler.family", VType::Str, "edm"},
        {"sampler.nfe", VType::Int, "18"},
        {"sampler.s_churn", VType::Real, "0"},
        {"sampler.s_noise", VType::Real, "1"},
        {"sampler.heun", VType::Bool, "true"},
        {"eval.sigma_y", VType::Real, "0.05"},
        {"eval.count", VType::Int, "16"},
    };
    for (int i = 0; i < kMaxTasks; ++i) {
        const std::string p = "task." + std::to_string(i) + ".";
        // Slots 0/1 default to the deblur + inpainting pool.
        r.push_back({p + "kind", VType::Str, i == 0 ? "blur" : (i == 1 ? "inpaint" : "")});
        r.push_back({p + "weight", VType::Real, "1"});
        r.push_back({p + "blur_size", VType::Int, "9"});
        r.push_back({p + "blur_sigma1", VType::Real, "2"});
        r.push_back({p + "blur_sigma2", VType::Real, "2"});
        r.push_back({p + "blur_angle", VType::Real, "0"});
        r.push_back({p + "factor", VType::Int, "2"});
        r.push_back({p + "drop_p", VType::Real, "0.3"});
        r.push_back({p + "coils", VType::Int, "4"});
        r.push_back({p + "pattern", VType::Str, "uniform1d"});
        r.push_back({p + "accel", VType::Real, "4"});
    }
    return r;
}

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const std::int64_t x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
    }
}

double parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw ConfigError("config key '" + key + "': expected real, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "': expected bool, got '" + v + "'");
}

std::string canon_value(VType t, const std::string& key, const std::string& v) {
    switch (t) {
        case VType::Int: return std::to_string(parse_int(key, v));
        case VType::Real: {
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.17g", parse_real(key, v));
            return buf;
        }
        case VType::Bool: return parse_bool(key, v) ? "true" : "false";
        case VType::Str: return v;
    }
    return v;
}

MaskSpec::Pattern pattern_from_name(const std::string& key, const std::string& name) {
    if (name == "uniform1d") return MaskSpec::Pattern::uniform1d;
    if (name == "gaussian1d") return MaskSpec::Pattern::gaussian1d;
    if (name == "gaussian2d") return MaskSpec::Pattern::gaussian2d;
    if (name == "dust") return MaskSpec::Pattern::dust;
    throw ConfigError("config key '" + key + "': unknown mask pattern '" + name + "'");
}

OpKind kind_from_name(const std::string& key, const std::string& name) {
    if (name == "identity") return OpKind::identity;
    if (name == "blur") return OpKind::blur;
    if (name == "superres") return OpKind::superres;
    if (name == "inpaint") return OpKind::inpaint;
    if (name == "mri") return OpKind::mri;
    throw ConfigError("config key '" + key + "': unknown task kind '" + name + "'");
}

}  // namespace

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string default_config_text() {
    std::string out;
    for (const auto& e : registry()) out += e.key + " = " + e.def + "\n";
    return out;
}

Config parse_config(const std::string& text) {
    const std::vector<Entry> reg = registry();
    std::map<std::string, const Entry*> by_key;
    std::map<std::string, std::string> values;
    for (const auto& e : reg) {
        by_key[e.key] = &e;
        values[e.key] = canon_value(e.type, e.key, e.def);
    }

    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
            value = value.substr(1, value.size() - 2);
        const auto it = by_key.find(key);
        if (it == by_key.end()) throw ConfigError("unknown config key '" + key + "'");
        values[key] = canon_value(it->second->type, key, value);
    }

    Config cfg;
    auto geti = [&](const std::string& k) { return parse_int(k, values.at(k)); };
    auto getr = [&](const std::string& k) { return parse_real(k, values.at(k)); };
    auto getb = [&](const std::string& k) { return parse_bool(k, values.at(k)); };
    auto gets = [&](const std::string& k) { return values.at(k); };

    cfg.seed = static_cast<std::uint64_t>(geti("seed"));

    cfg.data.kind = gets("data.kind");
    cfg.data.size = static_cast<std::size_t>(geti("data.size"));
    cfg.data.count = static_cast<int>(geti("data.count"));
    cfg.data.path = gets("data.path");

    cfg.schedule = NoiseSchedule::for_family(schedule_family_from_name(gets("schedule.family")));
    cfg.schedule.sigma_min = getr("schedule.sigma_min");
    cfg.schedule.sigma_max = getr("schedule.sigma_max");
    cfg.schedule.rho = getr("schedule.rho");
    cfg.schedule.beta_min = getr("schedule.beta_min");
    cfg.schedule.beta_max = getr("schedule.beta_max");
    if (!(cfg.schedule.sigma_min > 0.0) || !(cfg.schedule.sigma_max > cfg.schedule.sigma_min))
        throw ConfigError("schedule: need 0 < sigma_min < sigma_max");
    cfg.precond.family = cfg.schedule.family;
    cfg.precond.sigma_data = getr("schedule.sigma_data");
    if (!(cfg.precond.sigma_data > 0.0)) throw ConfigError("schedule.sigma_data must be > 0");

    cfg.denoiser.K = static_cast<int>(geti("denoiser.k"));
    if (cfg.denoiser.K < 1 || cfg.denoiser.K > 8) throw ConfigError("denoiser.k must be in [1, 8]");
    cfg.denoiser.base_channels = static_cast<std::size_t>(geti("denoiser.channels"));
    cfg.denoiser.in_channels = static_cast<std::size_t>(geti("denoiser.in_channels"));
    cfg.denoiser.embed_dim = static_cast<std::size_t>(geti("denoiser.embed_dim"));
    if (cfg.denoiser.embed_dim == 0 || cfg.denoiser.embed_dim % 2)
        throw ConfigError("denoiser.embed_dim must be even and > 0");
    cfg.denoiser.untied = getb("denoiser.untied");
    cfg.denoiser.tau_init = getr("denoiser.tau_init");
    cfg.denoiser.tau_init_hi = getr("denoiser.tau_init_hi");
    cfg.denoiser.gamma_init = getr("denoiser.gamma_init");
    cfg.denoiser.gamma_init_hi = getr("denoiser.gamma_init_hi");
    if (!(cfg.denoiser.tau_init > 0.0) || !(cfg.denoiser.gamma_init > 0.0) ||
        !(cfg.denoiser.tau_init_hi > 0.0) || !(cfg.denoiser.gamma_init_hi > 0.0))
        throw ConfigError("denoiser weight inits must be > 0");

    cfg.train.lr = getr("train.lr");
    cfg.train.batch_size = static_cast<int>(geti("train.batch_size"));
    cfg.train.total_steps = static_cast<int>(geti("train.total_steps"));
    cfg.train.sigma_y_lo = getr("train.sigma_y_lo");
    cfg.train.sigma_y_hi = getr("train.sigma_y_hi");
    cfg.train.ema_decay = getr("train.ema_decay");
    cfg.train.checkpoint_every = static_cast<int>(geti("train.checkpoint_every"));
    cfg.train.seed = cfg.seed;
    if (cfg.train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (cfg.train.sigma_y_lo < 0.0 || cfg.train.sigma_y_hi < cfg.train.sigma_y_lo)
        throw ConfigError("train: need 0 <= sigma_y_lo <= sigma_y_hi");
    if (cfg.train.ema_decay < 0.0 || cfg.train.ema_decay >= 1.0)
        throw ConfigError("train.ema_decay must be in [0, 1)");

    for (int i = 0; i < kMaxTasks; ++i) {
        const std::string p = "task." + std::to_string(i) + ".";
        const std::string kind = gets(p + "kind");
        if (kind.empty()) continue;
        TaskSpec t;
        t.kind = kind_from_name(p + "kind", kind);
        t.weight = getr(p + "weight");
        t.blur_size = static_cast<std::size_t>(geti(p + "blur_size"));
        t.blur_sigma1 = getr(p + "blur_sigma1");
        t.blur_sigma2 = getr(p + "blur_sigma2");
        t.blur_angle = getr(p + "blur_angle");
        t.sr_factor = static_cast<std::size_t>(geti(p + "factor"));
        t.drop_p = getr(p + "drop_p");
        t.mri_coils = static_cast<std::size_t>(geti(p + "coils"));
        t.mri_mask.pattern = pattern_from_name(p + "pattern", gets(p + "pattern"));
        t.mri_mask.accel = getr(p + "accel");
        if (t.drop_p < 0.0 || t.drop_p >= 1.0)
            throw ConfigError("config key '" + p + "drop_p': must be in [0, 1)");
        cfg.train.tasks.push_back(t);
    }

    cfg.sampler.family = schedule_family_from_name(gets("sampler.family"));
    cfg.sampler.nfe = static_cast<int>(geti("sampler.nfe"));
    if (cfg.sampler.nfe < 1) throw ConfigError("sampler.nfe must be >= 1");
    cfg.sampler.s_churn = getr("sampler.s_churn");
    cfg.sampler.s_noise = getr("sampler.s_noise");
    if (cfg.sampler.s_churn < 0.0) throw ConfigError("sampler.s_churn must be >= 0");
    cfg.sampler.second_order = getb("sampler.heun");
    cfg.sampler.seed = cfg.seed;

    cfg.eval.sigma_y = getr("eval.sigma_y");
    cfg.eval.count = static_cast<int>(geti("eval.count"));

    cfg.effective = values;
    std::string canon;
    for (const auto& [k, v] : values) canon += k + " = " + v + "\n";
    cfg.canonical_text = canon;
    cfg.fingerprint = fnv1a64(canon);
    return cfg;
}

Config load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

}  // namespace dufold
