#include "ddgen/model_io.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "ddgen/error.hpp"

namespace ddgen {
namespace {

constexpr char kMagic[4] = {'D', 'D', 'M', '1'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) {
        out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
    }
}

void put_f64(std::string& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
        out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
    }
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
    }
    return v;
}

double get_f64(const std::string& in, std::size_t at) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
    }
    return std::bit_cast<double>(bits);
}

std::string join_dims(const std::vector<std::size_t>& dims) {
    std::string out;
    for (std::size_t k = 0; k < dims.size(); ++k) {
        out += (k ? "," : "") + std::to_string(dims[k]);
    }
    return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || end != text.data() + text.size()) {
        throw FormatError("header key '" + key + "' has malformed value '" + text + "'");
    }
    return value;
}

std::vector<std::size_t> parse_dims(const std::string& text) {
    std::vector<std::size_t> dims;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        dims.push_back(parse_number<std::size_t>("hidden_dims", item));
    }
    return dims;
}

}  // namespace

std::string format_exact(double value) {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, end);
}

std::string encode_ddm(const DualFunctionModel& model, const HeaderEntries& extras) {
    const ModelConfig& cfg = model.config();
    HeaderEntries header = extras;
    header["version"] = DualFunctionModel::kVersion;
    header["rows"] = std::to_string(cfg.rows);
    header["cols"] = std::to_string(cfg.cols);
    header["hidden_dims"] = join_dims(cfg.hidden_dims);
    header["activation"] = to_string(cfg.activation);
    header["step_conditioned"] = cfg.step_conditioned ? "1" : "0";
    header["center_inputs"] = cfg.center_inputs ? "1" : "0";
    header["path_steps"] = std::to_string(cfg.path_steps);
    header["init_scale"] = format_exact(cfg.init_scale);
    header["seed"] = std::to_string(cfg.seed);

    std::string text;
    for (const auto& [key, value] : header) {
        if (key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos) {
            throw ArgumentError("header entry '" + key + "' contains a reserved character");
        }
        text += key + "=" + value + "\n";
    }

    std::string out(kMagic, 4);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    out.reserve(out.size() + 16 * model.parameter_count());
    for (double w : model.weights()) {
        put_f64(out, w);
    }
    for (double w : model.ema()) {
        put_f64(out, w);
    }
    return out;
}

ModelFile decode_ddm(const std::string& bytes) {
    if (bytes.size() < 8) {
        throw FormatError("ddm file truncated at byte " + std::to_string(bytes.size()) + ": need 8-byte preamble");
    }
    if (bytes.compare(0, 4, kMagic, 4) != 0) {
        throw FormatError("bad ddm magic at byte offset 0 (expected DDM1)");
    }
    const std::size_t header_len = get_u32(bytes, 4);
    if (bytes.size() < 8 + header_len) {
        throw FormatError("ddm header declares " + std::to_string(header_len) + " bytes but file ends at offset " +
                          std::to_string(bytes.size()));
    }

    HeaderEntries entries;
    std::size_t pos = 8;
    const std::size_t header_end = 8 + header_len;
    while (pos < header_end) {
        std::size_t eol = bytes.find('\n', pos);
        if (eol == std::string::npos || eol >= header_end) {
            eol = header_end;
        }
        const std::string line = bytes.substr(pos, eol - pos);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError("ddm header line at byte offset " + std::to_string(pos) + " has no '='");
        }
        entries[line.substr(0, eq)] = line.substr(eq + 1);
        pos = eol + 1;
    }

    auto take = [&](const std::string& key) {
        const auto it = entries.find(key);
        if (it == entries.end()) {
            throw FormatError("ddm header is missing key '" + key + "'");
        }
        std::string value = it->second;
        entries.erase(it);
        return value;
    };

    if (const std::string version = take("version"); version != DualFunctionModel::kVersion) {
        throw FormatError("unsupported ddm version '" + version + "'");
    }
    ModelConfig cfg;
    cfg.rows = parse_number<std::size_t>("rows", take("rows"));
    cfg.cols = parse_number<std::size_t>("cols", take("cols"));
    cfg.hidden_dims = parse_dims(take("hidden_dims"));
    try {
        cfg.activation = parse_activation(take("activation"));
    } catch (const ArgumentError& e) {
        throw FormatError(e.what());
    }
    cfg.step_conditioned = take("step_conditioned") == "1";
    cfg.center_inputs = take("center_inputs") == "1";
    cfg.path_steps = parse_number<std::size_t>("path_steps", take("path_steps"));
    cfg.init_scale = parse_number<double>("init_scale", take("init_scale"));
    cfg.seed = parse_number<std::uint64_t>("seed", take("seed"));

    DualFunctionModel model = [&] {
        try {
            return DualFunctionModel::zeros(cfg);
        } catch (const ArgumentError& e) {
            throw FormatError(std::string("ddm header describes an invalid model: ") + e.what());
        }
    }();

    const std::size_t params = model.parameter_count();
    const std::size_t expected = header_end + 16 * params;
    if (bytes.size() != expected) {
        throw FormatError("ddm payload size mismatch: expected " + std::to_string(expected) + " bytes, found " +
                          std::to_string(bytes.size()) + " (payload starts at byte offset " +
                          std::to_string(header_end) + ")");
    }
    auto w = model.weights();
    auto e = model.ema();
    for (std::size_t k = 0; k < params; ++k) {
        w[k] = get_f64(bytes, header_end + 8 * k);
        e[k] = get_f64(bytes, header_end + 8 * (params + k));
    }
    return ModelFile{std::move(model), std::move(entries)};
}

void write_ddm(const std::filesystem::path& path, const DualFunctionModel& model, const HeaderEntries& extras) {
    const std::string bytes = encode_ddm(model, extras);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error("failed writing '" + path.string() + "'");
    }
}

ModelFile read_ddm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open '" + path.string() + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return decode_ddm(buf.str());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace ddgen
