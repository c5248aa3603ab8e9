#include "recat/toydata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "recat/binary_io.hpp"
#include "recat/error.hpp"
#include "recat/rng.hpp"

namespace recat {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kBackground = 0.9;

enum Stream : std::uint64_t {
    kBodyStream = 0xB0D1,
    kGarmentStream = 0x6A12,
    kSceneIds = 0x1D5,
    kTrainIds = 0x71,
    kTestIds = 0x72,
    kUnpairedIds = 0x73,
};

void check_params(const ToyDataParams& p) {
    if (p.height < 8 || p.width < 8) throw InvalidConfig("toy scenes need H, W >= 8");
    if (p.n_patterns < 2) throw InvalidConfig("toy data needs at least 2 patterns");
    if (p.channels < 1) throw InvalidConfig("toy data needs at least one channel");
}

struct Rect {
    std::size_t r0, rows, c0, cols;
};

// Texture area of the flat-lay garment render.
Rect texture_rect(const ToyDataParams& p) {
    const std::size_t r0 = p.height / 8, c0 = p.width / 8;
    return {r0, p.height - 2 * r0, c0, p.width - 2 * c0};
}

struct BodyShape {
    Rect mask;
    std::size_t notch_cols, notch_rows;
    double shear;  // garment rows shifted across the mask width
    struct Wave {
        double amp, fh, fw, phase;
    };
    std::vector<std::vector<Wave>> waves;  // per channel
};

std::size_t frac_of(std::size_t n, double f) {
    return static_cast<std::size_t>(std::lround(static_cast<double>(n) * f));
}

BodyShape body_shape(std::uint32_t body_id, const ToyDataParams& p) {
    CounterRng rng(body_id, {kBodyStream});
    BodyShape b;
    const std::size_t rows = std::max<std::size_t>(3, frac_of(p.height, 0.42 + 0.11 * rng.uniform()));
    const std::size_t cols = std::max<std::size_t>(3, frac_of(p.width, 0.56 + 0.14 * rng.uniform()));
    std::size_t r0 = frac_of(p.height, 0.18 + 0.10 * rng.uniform());
    std::size_t c0 = frac_of(p.width, 0.12 + 0.12 * rng.uniform());
    r0 = std::min(r0, p.height - rows);
    c0 = std::min(c0, p.width - cols);
    b.mask = {r0, rows, c0, cols};
    b.notch_cols = std::max<std::size_t>(2, cols / 4);
    b.notch_rows = std::max<std::size_t>(1, rows / 6);
    b.shear = -2.0 + 4.0 * rng.uniform();
    b.waves.resize(p.channels);
    for (auto& ch : b.waves)
        for (int k = 0; k < 3; ++k)
            ch.push_back({0.12 + 0.08 * rng.uniform(), 0.3 + 0.9 * rng.uniform(),
                          0.3 + 0.9 * rng.uniform(), kTwoPi * rng.uniform()});
    return b;
}

bool in_mask(const BodyShape& b, std::size_t h, std::size_t w) {
    const Rect& m = b.mask;
    if (h < m.r0 || h >= m.r0 + m.rows || w < m.c0 || w >= m.c0 + m.cols) return false;
    const std::size_t notch_c0 = m.c0 + (m.cols - b.notch_cols) / 2;
    const bool in_notch = h < m.r0 + b.notch_rows && w >= notch_c0 && w < notch_c0 + b.notch_cols;
    return !in_notch;
}

// Nearest-neighbour source pixel in the garment render for person pixel (h, w).
std::pair<std::size_t, std::size_t> warp_source(const BodyShape& b, const Rect& tex,
                                                std::size_t h, std::size_t w) {
    const Rect& m = b.mask;
    const double v = (static_cast<double>(w - m.c0) + 0.5) / static_cast<double>(m.cols);
    const double u = (static_cast<double>(h - m.r0) + 0.5) / static_cast<double>(m.rows);
    const double su = static_cast<double>(tex.r0) + u * static_cast<double>(tex.rows) +
                      b.shear * (v - 0.5);
    const double sv = static_cast<double>(tex.c0) + v * static_cast<double>(tex.cols);
    const auto clampi = [](double x, std::size_t lo, std::size_t n) {
        const double f = std::floor(x);
        const double hi = static_cast<double>(lo + n - 1);
        return static_cast<std::size_t>(std::clamp(f, static_cast<double>(lo), hi));
    };
    return {clampi(su, tex.r0, tex.rows), clampi(sv, tex.c0, tex.cols)};
}

}  // namespace

LatentGrid render_garment(std::uint32_t garment_id, const ToyDataParams& p) {
    check_params(p);
    CounterRng rng(garment_id, {kGarmentStream});
    const std::uint32_t pattern = garment_id % p.n_patterns;
    const std::uint32_t family = pattern % 3;  // stripes, checks, blobs
    const double freq = 0.08 + 0.05 * static_cast<double>(pattern / 3) + 0.03 * rng.uniform();
    const bool vertical = rng.uniform() < 0.5;
    const double ph1 = rng.uniform(), ph2 = rng.uniform();
    std::vector<double> amp(p.channels), off(p.channels);
    for (std::size_t c = 0; c < p.channels; ++c) {
        amp[c] = (0.4 + 0.4 * rng.uniform()) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        off[c] = -0.3 + 0.6 * rng.uniform();
    }
    struct Blob {
        double r, c, rad;
    };
    std::vector<Blob> blobs;
    const Rect tex = texture_rect(p);
    for (int k = 0; k < 4; ++k)
        blobs.push_back({rng.uniform() * static_cast<double>(tex.rows),
                         rng.uniform() * static_cast<double>(tex.cols),
                         1.5 + 2.5 * rng.uniform()});
    // Logo: a 2-4 cell checkered motif near the texture centre.
    const std::size_t logo = 2 + rng.below(3);
    const std::size_t logo_r = tex.rows / 2 - logo / 2 + rng.below(3) - 1;
    const std::size_t logo_c = tex.cols / 2 - logo / 2 + rng.below(3) - 1;
    const double logo_sign = rng.uniform() < 0.5 ? -1.0 : 1.0;

    LatentGrid g(p.channels, p.height, p.width, kBackground);
    for (std::size_t i = 0; i < tex.rows; ++i)
        for (std::size_t j = 0; j < tex.cols; ++j) {
            const double u = static_cast<double>(i), v = static_cast<double>(j);
            double base = 0.0;
            if (family == 0) {
                base = std::tanh(3.0 * std::sin(kTwoPi * ((vertical ? v : u) * freq + ph1)));
            } else if (family == 1) {
                base = std::tanh(3.0 * std::sin(kTwoPi * (u * freq + ph1)) *
                                 std::sin(kTwoPi * (v * freq + ph2)));
            } else {
                double s = 0.0;
                for (const auto& b : blobs) {
                    const double d2 = (u - b.r) * (u - b.r) + (v - b.c) * (v - b.c);
                    s += std::exp(-d2 / (2.0 * b.rad * b.rad));
                }
                base = 2.0 * std::min(s, 1.0) - 1.0;
            }
            const bool in_logo = i >= logo_r && i < logo_r + logo && j >= logo_c && j < logo_c + logo;
            for (std::size_t c = 0; c < p.channels; ++c) {
                double val = off[c] + amp[c] * base;
                if (in_logo) {
                    const double cell = ((i - logo_r + j - logo_c) % 2 == 0) ? 1.0 : -1.0;
                    val = 0.95 * logo_sign * cell * (c % 2 == 0 ? 1.0 : -1.0);
                }
                g.at(c, tex.r0 + i, tex.c0 + j) = std::clamp(val, -1.0, 1.0);
            }
        }
    return g;
}

LatentGrid reconstruct_person(const LatentGrid& person_masked, const LatentGrid& garment,
                              std::uint32_t body_id, const ToyDataParams& p) {
    check_params(p);
    const BodyShape b = body_shape(body_id, p);
    const Rect tex = texture_rect(p);
    LatentGrid out = person_masked;
    for (std::size_t h = 0; h < p.height; ++h)
        for (std::size_t w = 0; w < p.width; ++w) {
            if (!in_mask(b, h, w)) continue;
            const auto [sh, sw] = warp_source(b, tex, h, w);
            for (std::size_t c = 0; c < p.channels; ++c) out.at(c, h, w) = garment.at(c, sh, sw);
        }
    return out;
}

ToyScene make_scene(std::uint32_t body_id, std::uint32_t garment_id, const ToyDataParams& p) {
    check_params(p);
    const BodyShape b = body_shape(body_id, p);
    ToyScene s;
    s.body_id = body_id;
    s.garment_id = garment_id;
    s.garment = render_garment(garment_id, p);

    LatentGrid mask(1, p.height, p.width);
    LatentGrid body(p.channels, p.height, p.width);
    for (std::size_t h = 0; h < p.height; ++h)
        for (std::size_t w = 0; w < p.width; ++w) {
            mask.at(0, h, w) = in_mask(b, h, w) ? 1.0 : 0.0;
            const double y = static_cast<double>(h) / static_cast<double>(p.height);
            const double x = static_cast<double>(w) / static_cast<double>(p.width);
            for (std::size_t c = 0; c < p.channels; ++c) {
                double v = 0.0;
                for (const auto& wv : b.waves[c]) v += wv.amp * std::cos(kTwoPi * (wv.fh * y + wv.fw * x) + wv.phase);
                body.at(c, h, w) = v;
            }
        }
    s.mask = RegionMask(std::move(mask));
    s.person_masked = mask_zero_region(body, s.mask);
    s.person_full = reconstruct_person(s.person_masked, s.garment, body_id, p);
    return s;
}

ToyScene gen_scene(std::uint64_t seed, std::size_t C, std::size_t H, std::size_t W,
                   std::uint32_t n_patterns) {
    CounterRng rng(seed, {kSceneIds});
    const std::uint32_t body_id = rng.next_u32();
    const std::uint32_t garment_id = rng.next_u32();
    return make_scene(body_id, garment_id, ToyDataParams{C, H, W, n_patterns});
}

DatasetSplit gen_dataset(std::uint64_t seed, std::size_t n_train, std::size_t n_test,
                         const ToyDataParams& p) {
    check_params(p);
    if (n_test % 2 != 0) throw InvalidConfig("n_test must be even (half paired, half unpaired)");
    DatasetSplit split;
    std::set<std::uint32_t> used_bodies;
    auto draw_body = [&](CounterRng& rng) {
        for (;;) {
            const std::uint32_t id = rng.next_u32();
            if (used_bodies.insert(id).second) return id;
        }
    };

    split.train.reserve(n_train);
    for (std::size_t i = 0; i < n_train; ++i) {
        CounterRng rng(seed, {kTrainIds, i});
        const std::uint32_t body = draw_body(rng);
        split.train.push_back(make_scene(body, rng.next_u32(), p));
    }
    const std::size_t half = n_test / 2;
    for (std::size_t i = 0; i < half; ++i) {
        CounterRng rng(seed, {kTestIds, i});
        const std::uint32_t body = draw_body(rng);
        split.test_paired.push_back(make_scene(body, rng.next_u32(), p));
    }
    for (std::size_t i = 0; i < half; ++i) {
        CounterRng rng(seed, {kUnpairedIds, i});
        const std::uint32_t body = draw_body(rng);
        UnpairedSample u;
        u.person = make_scene(body, rng.next_u32(), p);
        // Borrow a garment from the paired pool, as in the usual shuffled
        // unpaired protocol; fall back to fresh ids on a clash.
        std::uint32_t gid = split.test_paired[(i + 1) % half].garment_id;
        while (gid == u.person.garment_id) gid = rng.next_u32();
        u.garment_id = gid;
        u.garment = render_garment(gid, p);
        split.test_unpaired.push_back(std::move(u));
    }
    return split;
}

ToyDataParams infer_params(const DatasetSplit& split, std::uint32_t n_patterns) {
    const ToyScene* s = nullptr;
    if (!split.train.empty()) s = &split.train.front();
    else if (!split.test_paired.empty()) s = &split.test_paired.front();
    else if (!split.test_unpaired.empty()) s = &split.test_unpaired.front().person;
    if (s == nullptr) return ToyDataParams{4, 32, 24, n_patterns};
    return {s->person_full.channels(), s->person_full.height(), s->person_full.width(), n_patterns};
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[4] = {'R', 'C', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

void put_grid_record(std::ostream& os, const LatentGrid& g) {
    std::ostringstream rec;
    write_grid(rec, g);
    const std::string bytes = rec.str();
    bin::put_u64(os, bytes.size());
    bin::put_bytes(os, bytes);
}

LatentGrid get_grid_record(std::istream& is) {
    const std::uint64_t len = bin::get_u64(is, "grid record length");
    if (len > (std::uint64_t{1} << 34)) throw FormatError("grid record too large");
    std::istringstream rec(bin::get_bytes(is, static_cast<std::size_t>(len), "grid record"));
    LatentGrid g = read_grid(rec);
    if (rec.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in grid record");
    return g;
}

void put_scene(std::ostream& os, const ToyScene& s) {
    put_grid_record(os, s.person_full);
    put_grid_record(os, s.person_masked);
    put_grid_record(os, s.garment);
    put_grid_record(os, s.mask.grid());
    bin::put_u32(os, s.garment_id);
    bin::put_u32(os, s.body_id);
}

ToyScene get_scene(std::istream& is) {
    ToyScene s;
    s.person_full = get_grid_record(is);
    s.person_masked = get_grid_record(is);
    s.garment = get_grid_record(is);
    try {
        s.mask = RegionMask(get_grid_record(is));
    } catch (const NonBinaryMask& e) {
        throw FormatError(std::string("invalid mask record: ") + e.what());
    } catch (const ShapeMismatch& e) {
        throw FormatError(std::string("invalid mask record: ") + e.what());
    }
    s.garment_id = bin::get_u32(is, "garment id");
    s.body_id = bin::get_u32(is, "body id");
    if (!s.person_full.same_shape(s.person_masked) || !s.person_full.same_shape(s.garment) ||
        s.mask.height() != s.person_full.height() || s.mask.width() != s.person_full.width())
        throw FormatError("inconsistent scene shapes");
    return s;
}

std::uint64_t get_count(std::istream& is, const char* what) {
    const std::uint64_t n = bin::get_u64(is, what);
    if (n > (std::uint64_t{1} << 32)) throw FormatError(std::string("implausible ") + what);
    return n;
}

}  // namespace

std::string encode_dataset(const DatasetSplit& split, std::uint32_t n_patterns) {
    std::ostringstream os;
    os.write(kMagic, 4);
    bin::put_u32(os, kVersion);
    bin::put_u32(os, n_patterns);
    bin::put_u64(os, split.train.size());
    for (const auto& s : split.train) put_scene(os, s);
    bin::put_u64(os, split.test_paired.size());
    for (const auto& s : split.test_paired) put_scene(os, s);
    bin::put_u64(os, split.test_unpaired.size());
    for (const auto& u : split.test_unpaired) {
        put_scene(os, u.person);
        put_grid_record(os, u.garment);
        bin::put_u32(os, u.garment_id);
    }
    return os.str();
}

DatasetSplit decode_dataset(const std::string& bytes, std::uint32_t* n_patterns) {
    std::istringstream is(bytes);
    if (bin::get_bytes(is, 4, "dataset magic") != std::string(kMagic, 4))
        throw FormatError("not a dataset file (bad magic)");
    const std::uint32_t version = bin::get_u32(is, "dataset version");
    if (version != kVersion) throw FormatError("unsupported dataset version " + std::to_string(version));
    const std::uint32_t patterns = bin::get_u32(is, "pattern count");
    if (n_patterns != nullptr) *n_patterns = patterns;
    DatasetSplit split;
    for (std::uint64_t n = get_count(is, "train count"); n > 0; --n) split.train.push_back(get_scene(is));
    for (std::uint64_t n = get_count(is, "paired count"); n > 0; --n)
        split.test_paired.push_back(get_scene(is));
    for (std::uint64_t n = get_count(is, "unpaired count"); n > 0; --n) {
        UnpairedSample u;
        u.person = get_scene(is);
        u.garment = get_grid_record(is);
        u.garment_id = bin::get_u32(is, "unpaired garment id");
        if (!u.garment.same_shape(u.person.garment)) throw FormatError("unpaired garment shape");
        split.test_unpaired.push_back(std::move(u));
    }
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after dataset");
    return split;
}

void save_dataset(const DatasetSplit& split, std::uint32_t n_patterns, const std::string& path) {
    bin::write_file(path, encode_dataset(split, n_patterns));
}

DatasetSplit load_dataset(const std::string& path, std::uint32_t* n_patterns) {
    return decode_dataset(bin::read_file(path), n_patterns);
}

}  // namespace recat
