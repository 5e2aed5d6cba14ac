#include "ddgen/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "ddgen/error.hpp"
#include "ddgen/model_io.hpp"

namespace ddgen {
namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
    T value{};
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        throw ArgumentError("config key '" + key + "': cannot parse '" + text + "'");
    }
    return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1") {
        return true;
    }
    if (text == "false" || text == "0") {
        return false;
    }
    throw ArgumentError("config key '" + key + "': expected true or false, got '" + text + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(parse_value<std::size_t>(key, trim(item)));
    }
    return out;
}

std::string join_list(const std::vector<std::size_t>& values) {
    std::string out;
    for (std::size_t k = 0; k < values.size(); ++k) {
        out += (k ? "," : "") + std::to_string(values[k]);
    }
    return out;
}

struct Field {
    std::string name;
    std::function<void(TrainConfig&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
Field number(std::string name, T TrainConfig::*member) {
    return {name,
            [name, member](TrainConfig& c, const std::string& v) { c.*member = parse_value<T>(name, v); },
            [member](const TrainConfig& c) {
                if constexpr (std::is_floating_point_v<T>) {
                    return format_exact(c.*member);
                } else {
                    return std::to_string(c.*member);
                }
            }};
}

template <typename T>
Field walk_number(std::string name, T WalkConfig::*member) {
    return {"walk." + name,
            [name, member](TrainConfig& c, const std::string& v) { c.walk.*member = parse_value<T>("walk." + name, v); },
            [member](const TrainConfig& c) {
                if constexpr (std::is_floating_point_v<T>) {
                    return format_exact(c.walk.*member);
                } else {
                    return std::to_string(c.walk.*member);
                }
            }};
}

Field flag(std::string name, bool TrainConfig::*member) {
    return {name, [name, member](TrainConfig& c, const std::string& v) { c.*member = parse_bool(name, v); },
            [member](const TrainConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back(number("iters", &TrainConfig::iters));
        f.push_back(number("warmup", &TrainConfig::warmup));
        f.push_back(number("learning_rate", &TrainConfig::learning_rate));
        f.push_back(number("batch_size", &TrainConfig::batch_size));
        f.push_back(number("path_steps", &TrainConfig::path_steps));
        f.push_back(number("knn_k", &TrainConfig::knn_k));
        f.push_back(number("cut_count", &TrainConfig::cut_count));
        f.push_back(number("ema_decay", &TrainConfig::ema_decay));
        f.push_back(number("clip_norm", &TrainConfig::clip_norm));
        f.push_back(number("marginal_refresh", &TrainConfig::marginal_refresh));
        f.push_back(walk_number("targets_per_gap", &WalkConfig::targets_per_gap));
        f.push_back(walk_number("step_size", &WalkConfig::step_size));
        f.push_back(walk_number("max_steps", &WalkConfig::max_steps));
        f.push_back(walk_number("tol", &WalkConfig::tol));
        f.push_back(walk_number("tol_fraction", &WalkConfig::tol_fraction));
        f.push_back(walk_number("noise_scale", &WalkConfig::noise_scale));
        f.push_back({"walk.normalize_direction",
                     [](TrainConfig& c, const std::string& v) {
                         c.walk.normalize_direction = parse_bool("walk.normalize_direction", v);
                     },
                     [](const TrainConfig& c) { return std::string(c.walk.normalize_direction ? "true" : "false"); }});
        f.push_back(walk_number("seed", &WalkConfig::seed));
        f.push_back(number("train_targets_per_gap", &TrainConfig::train_targets_per_gap));
        f.push_back(number("lambda_div", &TrainConfig::lambda_div));
        f.push_back(number("lambda_cluster", &TrainConfig::lambda_cluster));
        f.push_back(number("lambda_gen", &TrainConfig::lambda_gen));
        f.push_back({"cluster_reduction",
                     [](TrainConfig& c, const std::string& v) {
                         if (v == "sum") {
                             c.cluster_reduction = ClusterReduction::sum;
                         } else if (v == "mean") {
                             c.cluster_reduction = ClusterReduction::mean;
                         } else {
                             throw ArgumentError("config key 'cluster_reduction': expected sum or mean, got '" + v +
                                                 "'");
                         }
                     },
                     [](const TrainConfig& c) {
                         return std::string(c.cluster_reduction == ClusterReduction::sum ? "sum" : "mean");
                     }});
        f.push_back(number("seed", &TrainConfig::seed));
        f.push_back(number("early_stop_patience", &TrainConfig::early_stop_patience));
        f.push_back(number("holdout_fraction", &TrainConfig::holdout_fraction));
        f.push_back({"hidden_dims",
                     [](TrainConfig& c, const std::string& v) { c.hidden_dims = parse_list("hidden_dims", v); },
                     [](const TrainConfig& c) { return join_list(c.hidden_dims); }});
        f.push_back({"activation",
                     [](TrainConfig& c, const std::string& v) { c.activation = parse_activation(v); },
                     [](const TrainConfig& c) { return to_string(c.activation); }});
        f.push_back(flag("step_conditioned", &TrainConfig::step_conditioned));
        f.push_back(flag("center_inputs", &TrainConfig::center_inputs));
        f.push_back(number("init_scale", &TrainConfig::init_scale));
        return f;
    }();
    return table;
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const Field& f : fields()) {
            k.push_back(f.name);
        }
        return k;
    }();
    return keys;
}

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.name == key; });
    if (it == table.end()) {
        throw ArgumentError("unknown config key '" + key + "'");
    }
    it->set(cfg, value);
}

TrainConfig parse_train_config(const std::string& text, TrainConfig base, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ArgumentError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            set_config_value(base, key, value);
        } catch (const ArgumentError& e) {
            throw ArgumentError(source + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return base;
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ArgumentError("cannot open config file " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_train_config(buf.str(), std::move(base), path.string());
}

std::string format_train_config(const TrainConfig& cfg) {
    std::string out;
    for (const Field& f : fields()) {
        out += f.name + " = " + f.get(cfg) + "\n";
    }
    return out;
}

}  // namespace ddgen
