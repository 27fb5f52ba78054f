#include "tcemu/engine.hpp"

#include "json.hpp"

#include <omp.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace tcemu::engine {

namespace {

using nlohmann::ordered_json;

int element_bytes(FormatId id) { return format_of(id).total_bits / 8; }

uint32_t magnitude_mask(const FloatFormat& fmt) { return fmt.sign_bit() - 1u; }

std::string hex_bits(uint32_t bits, const FloatFormat& fmt) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%0*x", fmt.total_bits / 4, bits);
    return buf;
}

} // namespace

Matrix Matrix::zeros(int rows, int cols, FormatId format) {
    if (rows <= 0 || cols <= 0)
        throw input_error("matrix dimensions must be positive");
    Matrix m;
    m.rows = rows;
    m.cols = cols;
    m.format = format;
    m.data.assign(size_t(rows) * size_t(cols), 0u);
    return m;
}

Matrix matrix_from_tile(const Tile& tile) {
    Matrix m = Matrix::zeros(kTileDim, kTileDim, tile.format);
    std::copy(tile.bits.begin(), tile.bits.end(), m.data.begin());
    return m;
}

Tile tile_from_matrix(const Matrix& m) {
    if (m.rows != kTileDim || m.cols != kTileDim)
        throw input_error("expected a 16x16 matrix, got " + std::to_string(m.rows) + "x" +
                          std::to_string(m.cols));
    Tile t;
    t.format = m.format;
    std::copy(m.data.begin(), m.data.end(), t.bits.begin());
    return t;
}

namespace {

constexpr char kMagic[4] = {'H', 'W', 'K', 'T'};
constexpr uint8_t kVersion = 0x01;
constexpr uint64_t kMaxElements = uint64_t(1) << 28;

FormatId format_from_code(uint8_t code) {
    switch (code) {
    case 1: return FormatId::fp32;
    case 2: return FormatId::fp16;
    case 3: return FormatId::bf16;
    case 4: return FormatId::fp8_e4m3;
    default: throw input_error("unknown format code " + std::to_string(code) + " in tile file");
    }
}

} // namespace

Matrix read_matrix(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw input_error("cannot open '" + path + "' for reading");
    std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad())
        throw input_error("i/o error while reading '" + path + "'");
    const auto* p = reinterpret_cast<const uint8_t*>(raw.data());
    if (raw.size() < 16)
        throw input_error("'" + path + "' is too short to be a tile file");
    if (std::memcmp(p, kMagic, 4) != 0)
        throw input_error("'" + path + "' does not start with the HWKT magic");
    if (p[4] != kVersion)
        throw input_error("'" + path + "' has unsupported version " + std::to_string(p[4]));
    FormatId format = format_from_code(p[5]);
    if (p[6] != 0 || p[7] != 0)
        throw input_error("'" + path + "' has nonzero reserved header bytes");
    auto read_u32 = [&](size_t off) {
        return uint32_t(p[off]) | uint32_t(p[off + 1]) << 8 | uint32_t(p[off + 2]) << 16 |
               uint32_t(p[off + 3]) << 24;
    };
    uint32_t rows = read_u32(8);
    uint32_t cols = read_u32(12);
    if (rows == 0 || cols == 0)
        throw input_error("'" + path + "' declares an empty matrix");
    uint64_t count = uint64_t(rows) * uint64_t(cols);
    if (count > kMaxElements)
        throw input_error("'" + path + "' declares an unreasonably large matrix");
    size_t ebytes = size_t(element_bytes(format));
    if (raw.size() != 16 + count * ebytes)
        throw input_error("'" + path + "' payload size does not match its header");
    Matrix m = Matrix::zeros(int(rows), int(cols), format);
    const uint8_t* q = p + 16;
    for (uint64_t i = 0; i < count; ++i) {
        uint32_t bits = 0;
        for (size_t b = 0; b < ebytes; ++b)
            bits |= uint32_t(q[i * ebytes + b]) << (8 * b);
        m.data[i] = bits;
    }
    return m;
}

void write_matrix(const std::string& path, const Matrix& m) {
    if (m.rows <= 0 || m.cols <= 0 || m.data.size() != size_t(m.rows) * size_t(m.cols))
        throw input_error("matrix shape does not match its payload");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw input_error("cannot open '" + path + "' for writing");
    std::array<char, 16> header{};
    std::memcpy(header.data(), kMagic, 4);
    header[4] = char(kVersion);
    header[5] = char(uint8_t(m.format));
    auto put_u32 = [&](size_t off, uint32_t v) {
        header[off] = char(v & 0xff);
        header[off + 1] = char((v >> 8) & 0xff);
        header[off + 2] = char((v >> 16) & 0xff);
        header[off + 3] = char((v >> 24) & 0xff);
    };
    put_u32(8, uint32_t(m.rows));
    put_u32(12, uint32_t(m.cols));
    out.write(header.data(), header.size());
    size_t ebytes = size_t(element_bytes(m.format));
    std::string payload(m.data.size() * ebytes, '\0');
    for (size_t i = 0; i < m.data.size(); ++i)
        for (size_t b = 0; b < ebytes; ++b)
            payload[i * ebytes + b] = char((m.data[i] >> (8 * b)) & 0xff);
    out.write(payload.data(), std::streamsize(payload.size()));
    out.flush();
    if (!out)
        throw input_error("i/o error while writing '" + path + "'");
}

namespace {

// Zero-valued tile (any sign bits): such a tile contributes no products.
bool tile_is_zero(const Tile& tile) {
    uint32_t mask = magnitude_mask(format_of(tile.format));
    for (uint32_t bits : tile.bits)
        if (bits & mask)
            return false;
    return true;
}

Tile gather_tile(const Matrix& m, int row0, int col0) {
    Tile t;
    t.format = m.format;
    for (int r = 0; r < kTileDim; ++r)
        for (int c = 0; c < kTileDim; ++c) {
            int mr = row0 + r;
            int mc = col0 + c;
            t.at(r, c) = (mr < m.rows && mc < m.cols) ? m.at(mr, mc) : 0u;
        }
    return t;
}

Matrix matmul_impl(const Matrix& a, const Matrix& b, const Matrix& c,
                   const PipelineProfile& profile, int threads, bool parallel) {
    validate_profile(profile);
    if (a.format != profile.input_format || b.format != profile.input_format)
        throw input_error("operand format does not match profile '" + profile.name + "'");
    if (c.format != FormatId::fp32)
        throw input_error("accumulator matrix must be fp32");
    if (a.cols != b.rows || a.rows != c.rows || b.cols != c.cols)
        throw input_error("matmul shapes do not agree: a is " + std::to_string(a.rows) + "x" +
                          std::to_string(a.cols) + ", b is " + std::to_string(b.rows) + "x" +
                          std::to_string(b.cols) + ", c is " + std::to_string(c.rows) + "x" +
                          std::to_string(c.cols));

    // Validate all elements up front: the tile loop below runs inside an
    // OpenMP region that exceptions must not cross. Infinite accumulator
    // cells are legal here (they model a saturated earlier step and pass
    // through each fold unchanged); NaN has no modeled semantics anywhere.
    const FloatFormat& efmt = format_of(profile.input_format);
    for (const Matrix* m : {&a, &b})
        for (uint32_t bits : m->data)
            if (!decode(bits, efmt).is_finite())
                throw input_error("matmul operand elements must be finite");
    for (uint32_t bits : c.data)
        if ((bits & 0x7fffffffu) > 0x7f800000u)
            throw input_error("matmul accumulator cells must not be NaN");

    const int mt = (a.rows + kTileDim - 1) / kTileDim;
    const int kt = (a.cols + kTileDim - 1) / kTileDim;
    const int nt = (b.cols + kTileDim - 1) / kTileDim;

    std::vector<Tile> atiles(size_t(mt) * size_t(kt));
    std::vector<uint8_t> azero(atiles.size());
    for (int ti = 0; ti < mt; ++ti)
        for (int tk = 0; tk < kt; ++tk) {
            Tile& t = atiles[size_t(ti) * size_t(kt) + size_t(tk)];
            t = gather_tile(a, ti * kTileDim, tk * kTileDim);
            azero[size_t(ti) * size_t(kt) + size_t(tk)] = tile_is_zero(t);
        }
    std::vector<Tile> btiles(size_t(kt) * size_t(nt));
    std::vector<uint8_t> bzero(btiles.size());
    for (int tk = 0; tk < kt; ++tk)
        for (int tj = 0; tj < nt; ++tj) {
            Tile& t = btiles[size_t(tk) * size_t(nt) + size_t(tj)];
            t = gather_tile(b, tk * kTileDim, tj * kTileDim);
            bzero[size_t(tk) * size_t(nt) + size_t(tj)] = tile_is_zero(t);
        }

    Matrix d = Matrix::zeros(c.rows, c.cols, FormatId::fp32);
    const int total = mt * nt;
    auto compute_tile = [&](int idx) {
        const int ti = idx / nt;
        const int tj = idx % nt;
        Tile acc = gather_tile(c, ti * kTileDim, tj * kTileDim);
        for (int tk = 0; tk < kt; ++tk) {
            if (azero[size_t(ti) * size_t(kt) + size_t(tk)] ||
                bzero[size_t(tk) * size_t(nt) + size_t(tj)])
                continue;
            acc = tile_mma_chained(acc, atiles[size_t(ti) * size_t(kt) + size_t(tk)],
                                   btiles[size_t(tk) * size_t(nt) + size_t(tj)], profile);
        }
        for (int r = 0; r < kTileDim; ++r) {
            int dr = ti * kTileDim + r;
            if (dr >= d.rows)
                break;
            for (int cidx = 0; cidx < kTileDim; ++cidx) {
                int dc = tj * kTileDim + cidx;
                if (dc >= d.cols)
                    break;
                d.at(dr, dc) = acc.at(r, cidx);
            }
        }
    };

    if (parallel) {
        int nthreads = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(nthreads)
        for (int idx = 0; idx < total; ++idx)
            compute_tile(idx);
    } else {
        for (int idx = 0; idx < total; ++idx)
            compute_tile(idx);
    }
    return d;
}

} // namespace

Matrix matmul(const Matrix& a, const Matrix& b, const Matrix& c, const PipelineProfile& profile,
              int threads) {
    return matmul_impl(a, b, c, profile, threads, true);
}

Matrix matmul_serial(const Matrix& a, const Matrix& b, const Matrix& c,
                     const PipelineProfile& profile) {
    return matmul_impl(a, b, c, profile, 0, false);
}

CompareReport compare(const Matrix& lhs, const Matrix& rhs) {
    if (lhs.format != rhs.format)
        throw input_error("cannot compare matrices with different element formats");
    if (lhs.rows != rhs.rows || lhs.cols != rhs.cols)
        throw input_error("cannot compare matrices with different shapes");
    const FloatFormat& fmt = format_of(lhs.format);
    const uint32_t mag = magnitude_mask(fmt);
    auto ordered = [&](uint32_t bits) {
        int64_t m = int64_t(bits & mag);
        return (bits & fmt.sign_bit()) ? -m : m;
    };
    CompareReport rep;
    rep.total = lhs.data.size();
    for (int r = 0; r < lhs.rows; ++r)
        for (int c = 0; c < lhs.cols; ++c) {
            uint32_t l = lhs.at(r, c);
            uint32_t rr = rhs.at(r, c);
            if (l == rr)
                continue;
            ++rep.mismatches;
            int64_t diff = ordered(l) - ordered(rr);
            uint64_t dist = diff < 0 ? uint64_t(-diff) : uint64_t(diff);
            rep.max_ulp = std::max(rep.max_ulp, dist);
            if (rep.samples.size() < 16)
                rep.samples.push_back({r, c, l, rr});
        }
    return rep;
}

void write_report(const std::string& path, const CompareReport& report) {
    ordered_json j;
    j["total"] = report.total;
    j["mismatches"] = report.mismatches;
    j["max_ulp"] = report.max_ulp;
    j["samples"] = ordered_json::array();
    for (const auto& s : report.samples) {
        ordered_json e;
        e["row"] = s.row;
        e["col"] = s.col;
        e["lhs"] = hex_bits(s.lhs_bits, kFp32);
        e["rhs"] = hex_bits(s.rhs_bits, kFp32);
        j["samples"].push_back(e);
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw input_error("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
    out.flush();
    if (!out)
        throw input_error("i/o error while writing '" + path + "'");
}

namespace {

std::string slot_token(const Slot& slot) {
    switch (slot.kind) {
    case SlotKind::accumulator: return "ACC";
    case SlotKind::previous: return "PREV";
    case SlotKind::product: return "P" + std::to_string(slot.index);
    }
    throw input_error("corrupt slot kind");
}

Slot slot_from_token(const std::string& token) {
    if (token == "ACC")
        return acc_slot();
    if (token == "PREV")
        return prev_slot();
    if (token.size() >= 2 && token[0] == 'P') {
        int idx = 0;
        for (size_t i = 1; i < token.size(); ++i) {
            if (token[i] < '0' || token[i] > '9')
                idx = -1;
            if (idx >= 0)
                idx = idx * 10 + (token[i] - '0');
        }
        if (idx >= 1 && idx <= kDotLength)
            return product_slot(idx);
    }
    throw input_error("unknown grouping token '" + token + "'");
}

const char* rounding_token(Rounding r) {
    return r == Rounding::toward_zero ? "toward_zero" : "nearest_even";
}

Rounding rounding_from_token(const std::string& token) {
    if (token == "toward_zero")
        return Rounding::toward_zero;
    if (token == "nearest_even")
        return Rounding::nearest_even;
    throw input_error("unknown rounding mode '" + token + "'");
}

} // namespace

std::string profile_to_json_text(const PipelineProfile& profile) {
    ordered_json j;
    j["name"] = profile.name;
    j["input_format"] = format_of(profile.input_format).name;
    j["accumulator_format"] = format_of(profile.accumulator_format).name;
    j["grouping"] = ordered_json::array();
    for (const auto& group : profile.grouping) {
        ordered_json g = ordered_json::array();
        for (const auto& slot : group)
            g.push_back(slot_token(slot));
        j["grouping"].push_back(g);
    }
    j["window_bits"] = profile.window_bits;
    j["exponent_floor"] = profile.exponent_floor;
    j["alignment_rounding"] = rounding_token(profile.alignment_rounding);
    j["final_rounding"] = rounding_token(profile.final_rounding);
    j["normalize_products"] = profile.normalize_products;
    j["renormalize_subnormal_products"] = profile.renormalize_subnormal_products;
    return j.dump(2) + "\n";
}

PipelineProfile profile_from_json_text(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw input_error(std::string("profile is not valid JSON: ") + e.what());
    }
    if (!j.is_object())
        throw input_error("profile JSON must be an object");
    static const std::set<std::string> known = {
        "name",          "input_format",       "accumulator_format",
        "grouping",      "window_bits",        "exponent_floor",
        "alignment_rounding", "final_rounding", "normalize_products",
        "renormalize_subnormal_products",
        // written by probe inference; carry no simulation semantics
        "evidence",      "notes",
    };
    for (const auto& item : j.items())
        if (!known.count(item.key()))
            throw input_error("unknown profile field '" + item.key() + "'");

    auto require = [&](const char* key) -> const ordered_json& {
        auto it = j.find(key);
        if (it == j.end())
            throw input_error(std::string("profile field '") + key +
                              "' is missing (an inferred profile omits exponent_floor when the "
                              "probes could not observe it; such a profile cannot drive the "
                              "simulator)");
        return *it;
    };
    auto as_string = [&](const char* key) {
        const auto& v = require(key);
        if (!v.is_string())
            throw input_error(std::string("profile field '") + key + "' must be a string");
        return v.get<std::string>();
    };
    auto as_int = [&](const char* key) {
        const auto& v = require(key);
        if (!v.is_number_integer())
            throw input_error(std::string("profile field '") + key + "' must be an integer");
        return v.get<int>();
    };
    auto as_bool = [&](const char* key) {
        const auto& v = require(key);
        if (!v.is_boolean())
            throw input_error(std::string("profile field '") + key + "' must be a boolean");
        return v.get<bool>();
    };

    PipelineProfile p;
    p.name = as_string("name");
    try {
        p.input_format = format_id(as_string("input_format"));
        p.accumulator_format = format_id(as_string("accumulator_format"));
    } catch (const format_error& e) {
        throw input_error(e.what());
    }
    const auto& groups = require("grouping");
    if (!groups.is_array())
        throw input_error("profile field 'grouping' must be an array of arrays");
    for (const auto& group : groups) {
        if (!group.is_array())
            throw input_error("profile field 'grouping' must be an array of arrays");
        std::vector<Slot> slots;
        for (const auto& tok : group) {
            if (!tok.is_string())
                throw input_error("grouping entries must be strings");
            slots.push_back(slot_from_token(tok.get<std::string>()));
        }
        p.grouping.push_back(std::move(slots));
    }
    p.window_bits = as_int("window_bits");
    p.exponent_floor = as_int("exponent_floor");
    p.alignment_rounding = rounding_from_token(as_string("alignment_rounding"));
    p.final_rounding = rounding_from_token(as_string("final_rounding"));
    p.normalize_products = as_bool("normalize_products");
    p.renormalize_subnormal_products = as_bool("renormalize_subnormal_products");
    validate_profile(p);
    return p;
}

PipelineProfile load_profile(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw input_error("cannot open '" + path + "' for reading");
    std::stringstream ss;
    ss << in.rdbuf();
    return profile_from_json_text(ss.str());
}

void save_profile(const std::string& path, const PipelineProfile& profile) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw input_error("cannot open '" + path + "' for writing");
    out << profile_to_json_text(profile);
    out.flush();
    if (!out)
        throw input_error("i/o error while writing '" + path + "'");
}

} // namespace tcemu::engine
