#include "ddgen/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "ddgen/error.hpp"

namespace ddgen {
namespace {

constexpr char kMagic[4] = {'D', 'D', 'S', '1'};
constexpr std::size_t kHeaderBytes = 16;

void put_u32(std::string& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) {
        out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
    }
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
    }
    return v;
}

std::string trim(std::string s) {
    const auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::vector<std::string> split_cells(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        cells.push_back(trim(cell));
    }
    if (!line.empty() && line.back() == ',') {
        cells.emplace_back();
    }
    return cells;
}

bool parse_real(const std::string& cell, double& out) {
    if (cell.empty()) {
        return false;
    }
    const char* first = cell.data();
    if (*first == '+') {
        ++first;
    }
    const auto [end, ec] = std::from_chars(first, cell.data() + cell.size(), out);
    return ec == std::errc{} && end == cell.data() + cell.size() && std::isfinite(out);
}

void minmax_map(std::span<double> values, bool& degenerate) {
    const auto [lo, hi] = std::ranges::minmax_element(values);
    const double min = *lo;
    const double range = *hi - min;
    if (range == 0.0) {
        degenerate = true;
        std::ranges::fill(values, 0.5);
        return;
    }
    for (double& v : values) {
        v = (v - min) / range;
    }
}

}  // namespace

WindowResult window_series(const SeriesMatrix& series, const WindowSpec& spec) {
    if (spec.window < 1 || spec.stride < 1) {
        throw ArgumentError("window and stride must be at least 1");
    }
    if (series.channels == 0) {
        throw ArgumentError("series has no channels");
    }
    if (series.timesteps < spec.window) {
        throw ArgumentError("series has " + std::to_string(series.timesteps) + " timesteps, window needs " +
                            std::to_string(spec.window));
    }
    const std::size_t count = (series.timesteps - spec.window) / spec.stride + 1;
    WindowResult result{ImageSet(count, series.channels, spec.window), false};

    double global_min = 0.0;
    double global_range = 0.0;
    if (spec.normalization == Normalization::global_minmax) {
        const auto [lo, hi] = std::ranges::minmax_element(series.values);
        global_min = *lo;
        global_range = *hi - *lo;
    }
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t t0 = i * spec.stride;
        for (std::size_t c = 0; c < series.channels; ++c) {
            for (std::size_t w = 0; w < spec.window; ++w) {
                result.images.at(i, c, w) = series.at(t0 + w, c);
            }
        }
        auto img = result.images.image(i);
        if (spec.normalization == Normalization::per_image_minmax) {
            minmax_map(img, result.degenerate_range);
        } else if (global_range == 0.0) {
            result.degenerate_range = true;
            std::ranges::fill(img, 0.5);
        } else {
            for (double& v : img) {
                v = (v - global_min) / global_range;
            }
        }
    }
    return result;
}

SeriesMatrix parse_csv(const std::string& text, const std::string& source) {
    SeriesMatrix m;
    std::stringstream ss(text);
    std::string line;
    std::size_t line_no = 0;
    bool first = true;
    while (std::getline(ss, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (trim(line).empty()) {
            continue;
        }
        const auto cells = split_cells(line);
        std::vector<double> row(cells.size());
        bool numeric = true;
        std::size_t bad_col = 0;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (!parse_real(cells[c], row[c])) {
                numeric = false;
                bad_col = c;
                break;
            }
        }
        if (first) {
            first = false;
            m.channels = cells.size();
            if (!numeric) {
                m.column_names = cells;
                continue;
            }
        }
        if (cells.size() != m.channels) {
            throw FormatError(source + ": row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                              " cells, expected " + std::to_string(m.channels) + " (ragged CSV)");
        }
        if (!numeric) {
            throw FormatError(source + ": row " + std::to_string(line_no) + ", column " + std::to_string(bad_col + 1) +
                              ": non-numeric cell '" + cells[bad_col] + "'");
        }
        m.values.insert(m.values.end(), row.begin(), row.end());
        ++m.timesteps;
    }
    if (m.timesteps == 0) {
        throw FormatError(source + ": no data rows");
    }
    return m;
}

SeriesMatrix load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open '" + path.string() + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str(), path.string());
}

std::string encode_dds(const ImageSet& set) {
    std::string out(kMagic, 4);
    put_u32(out, static_cast<std::uint32_t>(set.count()));
    put_u32(out, static_cast<std::uint32_t>(set.rows()));
    put_u32(out, static_cast<std::uint32_t>(set.cols()));
    out.reserve(kHeaderBytes + 4 * set.pixels().size());
    for (double v : set.pixels()) {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return out;
}

ImageSet decode_dds(const std::string& bytes) {
    if (bytes.size() < kHeaderBytes) {
        throw FormatError("dds header truncated: expected 16 bytes, found " + std::to_string(bytes.size()));
    }
    if (bytes.compare(0, 4, kMagic, 4) != 0) {
        throw FormatError("bad dds magic at byte offset 0 (expected DDS1)");
    }
    const std::size_t n = get_u32(bytes, 4);
    const std::size_t rows = get_u32(bytes, 8);
    const std::size_t cols = get_u32(bytes, 12);
    if (rows == 0 || cols == 0) {
        throw FormatError("dds header at byte offset 8 declares an empty image shape");
    }
    const std::size_t expected = kHeaderBytes + 4 * n * rows * cols;
    if (bytes.size() != expected) {
        throw FormatError("dds payload size mismatch: expected " + std::to_string(expected) + " bytes, found " +
                          std::to_string(bytes.size()) + " (first bad byte offset " +
                          std::to_string(std::min(bytes.size(), expected)) + ")");
    }
    std::vector<double> pixels(n * rows * cols);
    for (std::size_t k = 0; k < pixels.size(); ++k) {
        pixels[k] = std::bit_cast<float>(get_u32(bytes, kHeaderBytes + 4 * k));
    }
    return ImageSet(rows, cols, std::move(pixels));
}

void write_dds(const ImageSet& set, const std::filesystem::path& path) {
    const std::string bytes = encode_dds(set);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error("failed writing '" + path.string() + "'");
    }
}

ImageSet read_dds(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open '" + path.string() + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return decode_dds(buf.str());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

GaussianSynth synth_gaussian_ar1(std::size_t n, std::size_t rows, std::size_t cols, double rho, std::uint64_t seed) {
    if (!(std::abs(rho) < 1.0)) {
        throw ArgumentError("AR(1) coefficient must satisfy |rho| < 1");
    }
    const std::size_t d = rows * cols;
    GaussianSynth out{ImageSet(n, rows, cols), 0.0};
    out.analytic_mmi = -0.5 * static_cast<double>(d - 1) * std::log1p(-rho * rho);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double innovation = std::sqrt(1.0 - rho * rho);
    for (std::size_t i = 0; i < n; ++i) {
        auto img = out.images.image(i);
        double x = normal(rng);
        for (std::size_t p = 0; p < d; ++p) {
            if (p > 0) {
                x = rho * x + innovation * normal(rng);
            }
            img[p] = (std::clamp(x, -3.0, 3.0) + 3.0) / 6.0;
        }
    }
    return out;
}

ClusterSynth synth_two_clusters(std::size_t n, std::size_t rows, std::size_t cols, double separation,
                                std::uint64_t seed) {
    if (!(separation >= 0.0)) {
        throw ArgumentError("separation must be non-negative");
    }
    if (n % 2 != 0) {
        throw ArgumentError("synth_two_clusters needs an even n");
    }
    ClusterSynth out{ImageSet(n, rows, cols), std::vector<int>(n)};
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.05);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 2);
        out.labels[i] = label;
        const double center = std::clamp(0.5 + (label == 1 ? 0.5 : -0.5) * separation, 0.0, 1.0);
        for (double& v : out.images.image(i)) {
            v = std::clamp(center + noise(rng), 0.0, 1.0);
        }
    }
    return out;
}

ImageSet synth_uniform(std::size_t n, std::size_t rows, std::size_t cols, std::uint64_t seed) {
    ImageSet out(n, rows, cols);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : out.pixels()) {
        v = u(rng);
    }
    return out;
}

}  // namespace ddgen
