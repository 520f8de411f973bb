#include "diae/config.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

namespace diae {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

struct Field {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <class T>
T parse_num(const std::string& key, const std::string& v);

template <>
int parse_num<int>(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const int out = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
    }
}

template <>
uint64_t parse_num<uint64_t>(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const uint64_t out = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects an unsigned integer, got '" + v + "'");
    }
}

template <>
double parse_num<double>(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: key '" + key + "' expects true/false, got '" + v + "'");
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

const std::map<std::string, Field>& fields() {
#define NUM_FIELD(name, member, type)                                            \
    {                                                                             \
        name, Field{[](RunConfig& c, const std::string& v) {                      \
                        c.member = parse_num<type>(name, v);                      \
                    },                                                            \
                    [](const RunConfig& c) { return std::to_string(c.member); }}  \
    }
#define DBL_FIELD(name, member)                                                  \
    {                                                                             \
        name, Field{[](RunConfig& c, const std::string& v) {                      \
                        c.member = parse_num<double>(name, v);                    \
                    },                                                            \
                    [](const RunConfig& c) { return fmt_double(c.member); }}      \
    }
#define STR_FIELD(name, member)                                                  \
    {                                                                             \
        name, Field{[](RunConfig& c, const std::string& v) { c.member = v; },     \
                    [](const RunConfig& c) { return c.member; }}                  \
    }
    static const std::map<std::string, Field> f = {
        NUM_FIELD("t_total", t_total, int),
        NUM_FIELD("t_s", t_s, int),
        DBL_FIELD("lambda", lambda_inp),
        STR_FIELD("fold_policy", fold_policy),
        DBL_FIELD("beta_start", beta_start),
        DBL_FIELD("beta_end", beta_end),
        NUM_FIELD("side", side, int),
        NUM_FIELD("base_channels", base_channels, int),
        NUM_FIELD("res_blocks", res_blocks, int),
        NUM_FIELD("temb_width", temb_width, int),
        NUM_FIELD("cap_width", cap_width, int),
        DBL_FIELD("lr", lr),
        DBL_FIELD("weight_decay", weight_decay),
        NUM_FIELD("batch_size", batch_size, int),
        NUM_FIELD("steps", steps, int),
        NUM_FIELD("seed", seed, uint64_t),
        NUM_FIELD("ckpt_interval", ckpt_interval, int),
        NUM_FIELD("log_interval", log_interval, int),
        STR_FIELD("map_mode", map_mode),
        STR_FIELD("branch_mode", branch_mode),
        {"deterministic",
         Field{[](RunConfig& c, const std::string& v) {
                   c.deterministic = parse_bool("deterministic", v);
               },
               [](const RunConfig& c) {
                   return std::string(c.deterministic ? "true" : "false");
               }}},
        NUM_FIELD("num_sample_steps", num_sample_steps, int),
        STR_FIELD("eval_seeds", eval_seeds),
        NUM_FIELD("eval_count", eval_count, int),
        NUM_FIELD("corpus_triplets", corpus_triplets, int),
        NUM_FIELD("corpus_keys", corpus_keys, int),
        DBL_FIELD("mos_low_max", mos_low_max),
        DBL_FIELD("mos_high_min", mos_high_min),
        NUM_FIELD("ablate_warm_steps", ablate_warm_steps, int),
        NUM_FIELD("ablate_ft_steps", ablate_ft_steps, int),
        STR_FIELD("ablate_ts_values", ablate_ts_values),
        STR_FIELD("ablate_seeds", ablate_seeds),
        NUM_FIELD("ablate_eval_count", ablate_eval_count, int),
        STR_FIELD("corpus_dir", corpus_dir),
        STR_FIELD("test_corpus_dir", test_corpus_dir),
        STR_FIELD("triplets_file", triplets_file),
        STR_FIELD("test_triplets_file", test_triplets_file),
        STR_FIELD("out_dir", out_dir),
        STR_FIELD("checkpoint", checkpoint),
        STR_FIELD("resume", resume),
    };
#undef NUM_FIELD
#undef DBL_FIELD
#undef STR_FIELD
    return f;
}

void apply(RunConfig& cfg, const std::string& key, const std::string& value) {
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second.set(cfg, value);
}

} // namespace

FoldPolicy RunConfig::fold() const {
    if (fold_policy == "folded") return FoldPolicy::Folded;
    if (fold_policy == "gated") return FoldPolicy::Gated;
    throw ConfigError("config: fold_policy must be folded|gated, got '" +
                      fold_policy + "'");
}

MapMode RunConfig::map() const {
    if (map_mode == "full") return MapMode::Full;
    if (map_mode == "no_text") return MapMode::NoText;
    if (map_mode == "no_visual") return MapMode::NoVisual;
    throw ConfigError("config: map_mode must be full|no_text|no_visual, got '" +
                      map_mode + "'");
}

BranchMode RunConfig::branch() const {
    if (branch_mode == "dual") return BranchMode::Dual;
    if (branch_mode == "reference_only") return BranchMode::ReferenceOnly;
    throw ConfigError("config: branch_mode must be dual|reference_only, got '" +
                      branch_mode + "'");
}

void RunConfig::validate() const {
    if (t_total < 2) throw ConfigError("config: t_total must be >= 2");
    if (t_s < 1 || t_s > t_total)
        throw ConfigError("config: t_s must satisfy 1 <= t_s <= t_total (t_s=" +
                          std::to_string(t_s) + ", t_total=" +
                          std::to_string(t_total) + ")");
    if (lambda_inp < 0.0) throw ConfigError("config: lambda must be >= 0");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw ConfigError("config: need 0 < beta_start <= beta_end < 1");
    if (side != 32 && side != 48 && side != 64)
        throw ConfigError("config: side must be one of 32, 48, 64");
    if (base_channels < 8 || base_channels % 8 != 0)
        throw ConfigError("config: base_channels must be a positive multiple of 8");
    if (res_blocks < 1) throw ConfigError("config: res_blocks must be >= 1");
    if (lr <= 0.0) throw ConfigError("config: lr must be > 0");
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (steps < 0) throw ConfigError("config: steps must be >= 0");
    if (num_sample_steps < 1 || num_sample_steps > t_total)
        throw ConfigError("config: num_sample_steps must be in [1, t_total]");
    if (mos_low_max >= mos_high_min)
        throw ConfigError("config: mos_low_max must be < mos_high_min");
    (void)fold();
    (void)map();
    (void)branch();
}

std::string RunConfig::serialize() const {
    std::ostringstream os;
    os << "# resolved run configuration\n";
    for (const auto& [key, field] : fields()) os << key << " = " << field.get(*this) << "\n";
    return os.str();
}

RunConfig parse_config_text(const std::string& text,
                            const std::map<std::string, std::string>& overrides) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) +
                              " is not 'key = value'");
        apply(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    for (const auto& [k, v] : overrides) apply(cfg, k, v);
    cfg.validate();
    return cfg;
}

RunConfig parse_config(const std::string& path,
                       const std::map<std::string, std::string>& overrides) {
    std::string text;
    if (!path.empty()) {
        std::ifstream f(path);
        if (!f.good()) throw ConfigError("config: cannot open '" + path + "'");
        std::ostringstream ss;
        ss << f.rdbuf();
        text = ss.str();
    }
    return parse_config_text(text, overrides);
}

void write_resolved_config(const RunConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::ofstream f(out_dir + "/config.resolved", std::ios::trunc);
    require(f.good(), "config: cannot write resolved config to " + out_dir);
    f << cfg.serialize();
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::istringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_num<int>("list", item));
    }
    return out;
}

std::vector<uint64_t> parse_seed_list(const std::string& csv) {
    std::vector<uint64_t> out;
    std::istringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_num<uint64_t>("list", item));
    }
    return out;
}

} // namespace diae
