#include "rrr/data.hpp"

#include "rrr/rng.hpp"
#include "binio.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace rrr {

void Dataset::validate() const {
    if (X.rank() != 2 || y.rank() != 2) throw ShapeError("dataset: X and y must be rank 2");
    if (X.rows() != y.rows()) throw ShapeError("dataset: X and y row counts differ");
    if (geom.present() && geom.numel() != d())
        throw ShapeError("dataset: geometry does not match feature count");
    for (Index i = 0; i < y.rows(); ++i) {
        Index ones = 0;
        for (Index k = 0; k < y.cols(); ++k) ones += y.at(i, k) == 1.0;
        if (ones != 1) throw ValueError("dataset: row " + std::to_string(i) + " label is not one-hot");
    }
}

namespace {

Index toy_pixel(Index r, Index c) { return (r * kToyColorSide + c) * kToyColorChannels; }

void set_toy_pixel(Tensor& X, Index row, Index r, Index c, int color) {
    const Index base = toy_pixel(r, c);
    for (Index ch = 0; ch < kToyColorChannels; ++ch)
        X.at(row, base + ch) = kToyColorPalette[color][ch];
}

constexpr Index kCornerPix[4][2] = {{0, 0}, {0, 4}, {4, 0}, {4, 4}};
constexpr Index kTopMiddlePix[3][2] = {{0, 1}, {0, 2}, {0, 3}};

}  // namespace

Dataset gen_toy_color(Index n, std::uint64_t seed) {
    if (n <= 0 || n % 2 != 0) throw ValueError("gen_toy_color: n must be even and positive");
    Rng rng(seed);
    Dataset ds;
    ds.X = Tensor(Shape{n, kToyColorDim});
    std::vector<Index> labels(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const Index label = i % 2;
        labels[static_cast<size_t>(i)] = label;
        int pix[kToyColorSide][kToyColorSide];
        for (Index r = 0; r < kToyColorSide; ++r)
            for (Index c = 0; c < kToyColorSide; ++c)
                pix[r][c] = static_cast<int>(rng.below(4));

        if (label == 0) {
            // Both rules hold: equal corners, pairwise-distinct top-middle.
            const int corner = static_cast<int>(rng.below(4));
            for (auto& rc : kCornerPix) pix[rc[0]][rc[1]] = corner;
            int colors[4] = {0, 1, 2, 3};
            for (int slot = 0; slot < 3; ++slot) {
                const int pick = slot + static_cast<int>(rng.below(static_cast<std::uint64_t>(4 - slot)));
                std::swap(colors[slot], colors[pick]);
                pix[kTopMiddlePix[slot][0]][kTopMiddlePix[slot][1]] = colors[slot];
            }
        } else {
            // Neither rule holds; rejection-sample each violation.
            int c0, c1, c2, c3;
            do {
                c0 = static_cast<int>(rng.below(4));
                c1 = static_cast<int>(rng.below(4));
                c2 = static_cast<int>(rng.below(4));
                c3 = static_cast<int>(rng.below(4));
            } while (c0 == c1 && c1 == c2 && c2 == c3);
            pix[0][0] = c0;
            pix[0][4] = c1;
            pix[4][0] = c2;
            pix[4][4] = c3;
            int t0, t1, t2;
            do {
                t0 = static_cast<int>(rng.below(4));
                t1 = static_cast<int>(rng.below(4));
                t2 = static_cast<int>(rng.below(4));
            } while (t0 != t1 && t1 != t2 && t0 != t2);
            pix[0][1] = t0;
            pix[0][2] = t1;
            pix[0][3] = t2;
        }

        for (Index r = 0; r < kToyColorSide; ++r)
            for (Index c = 0; c < kToyColorSide; ++c)
                set_toy_pixel(ds.X, i, r, c, pix[r][c]);
    }
    ds.y = one_hot(labels, 2);
    ds.geom = {kToyColorSide, kToyColorSide, kToyColorChannels};
    return ds;
}

Dataset inject_decoy(const Dataset& base, DecoyMode mode, std::uint64_t seed) {
    if (!base.geom.present() || base.geom.channels != 1)
        throw ValueError("inject_decoy: needs single-channel image geometry");
    if (base.geom.height < 8 || base.geom.width < 8)
        throw ValueError("inject_decoy: geometry must be at least 8x8");
    if (base.k() != 10) throw ValueError("inject_decoy: needs 10 classes");

    const Index h = base.geom.height, w = base.geom.width;
    Rng rng(seed);
    Dataset out = base;
    out.aux_mask = Tensor(Shape{base.n(), base.d()});
    const std::vector<Index> labels = argmax_rows(base.y);
    for (Index i = 0; i < base.n(); ++i) {
        const int corner = static_cast<int>(rng.below(4));
        const Index r0 = (corner / 2 == 0) ? 0 : h - 4;
        const Index c0 = (corner % 2 == 0) ? 0 : w - 4;
        const Index digit = mode == DecoyMode::train ? labels[static_cast<size_t>(i)]
                                                     : static_cast<Index>(rng.below(10));
        const double shade = (255.0 - 25.0 * static_cast<double>(digit)) / 255.0;
        for (Index r = r0; r < r0 + 4; ++r)
            for (Index c = c0; c < c0 + 4; ++c) {
                out.X.at(i, r * w + c) = shade;
                out.aux_mask.at(i, r * w + c) = 1.0;
            }
    }
    return out;
}

Dataset gen_decoy_color(Index n, DecoyMode mode, std::uint64_t seed, double rule_noise) {
    if (rule_noise < 0 || rule_noise > 1) throw ValueError("gen_decoy_color: rule_noise in [0,1]");
    Dataset ds = gen_toy_color(n, seed);
    Rng rng(Rng::derive(seed, 1));
    const double shades[2] = {1.0, 30.0 / 255.0};
    ds.aux_mask = Tensor(Shape{n, kToyColorDim});
    const std::vector<Index> labels = argmax_rows(ds.y);
    for (Index i = 0; i < n; ++i) {
        const Index pick = mode == DecoyMode::train ? labels[static_cast<size_t>(i)]
                                                    : static_cast<Index>(rng.below(2));
        const double shade = shades[pick];
        for (Index c = 1; c <= 3; ++c) {
            const Index base = toy_pixel(4, c);
            for (Index ch = 0; ch < kToyColorChannels; ++ch) {
                ds.X.at(i, base + ch) = shade;
                ds.aux_mask.at(i, base + ch) = 1.0;
            }
        }
        if (mode == DecoyMode::train && rng.uniform() < rule_noise) {
            for (auto& rc : kCornerPix)
                set_toy_pixel(ds.X, i, rc[0], rc[1], static_cast<int>(rng.below(4)));
            for (auto& rc : kTopMiddlePix)
                set_toy_pixel(ds.X, i, rc[0], rc[1], static_cast<int>(rng.below(4)));
        }
    }
    return ds;
}

Dataset gen_quadrant2d(Index n, std::uint64_t seed) {
    if (n <= 0 || n % 2 != 0) throw ValueError("gen_quadrant2d: n must be even and positive");
    Rng rng(seed);
    Dataset ds;
    ds.X = Tensor(Shape{n, 2});
    std::vector<Index> labels(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const Index label = i % 2;
        labels[static_cast<size_t>(i)] = label;
        const double lo = label == 0 ? 0.1 : -1.0;
        const double hi = label == 0 ? 1.0 : -0.1;
        ds.X.at(i, 0) = rng.uniform(lo, hi);
        ds.X.at(i, 1) = rng.uniform(lo, hi);
    }
    ds.y = one_hot(labels, 2);
    return ds;
}

Index IdxArray::numel() const {
    Index n = 1;
    for (Index d : dims) n *= d;
    return n;
}

IdxArray parse_idx(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw IoError("idx: truncated header");
    if (bytes[0] != 0 || bytes[1] != 0) throw IoError("idx: bad magic");
    if (bytes[2] != 0x08)
        throw IoError("idx: unsupported type 0x" + std::to_string(bytes[2]) + " (want 0x08)");
    const size_t ndim = bytes[3];
    if (ndim == 0) throw IoError("idx: zero dimensions");
    if (bytes.size() < 4 + 4 * ndim) throw IoError("idx: truncated header");
    IdxArray a;
    for (size_t d = 0; d < ndim; ++d) {
        const size_t off = 4 + 4 * d;
        const std::uint32_t e = (static_cast<std::uint32_t>(bytes[off]) << 24) |
                                (static_cast<std::uint32_t>(bytes[off + 1]) << 16) |
                                (static_cast<std::uint32_t>(bytes[off + 2]) << 8) |
                                static_cast<std::uint32_t>(bytes[off + 3]);
        a.dims.push_back(static_cast<Index>(e));
    }
    const size_t expected = static_cast<size_t>(a.numel());
    const size_t have = bytes.size() - (4 + 4 * ndim);
    if (have < expected) throw IoError("idx: truncated payload");
    if (have > expected) throw IoError("idx: payload longer than extents imply");
    a.bytes.assign(bytes.begin() + static_cast<std::ptrdiff_t>(4 + 4 * ndim), bytes.end());
    return a;
}

std::vector<std::uint8_t> idx_bytes(const IdxArray& a) {
    std::vector<std::uint8_t> out;
    out.push_back(0);
    out.push_back(0);
    out.push_back(0x08);
    out.push_back(static_cast<std::uint8_t>(a.dims.size()));
    for (Index d : a.dims) {
        const auto e = static_cast<std::uint32_t>(d);
        out.push_back(static_cast<std::uint8_t>(e >> 24));
        out.push_back(static_cast<std::uint8_t>(e >> 16));
        out.push_back(static_cast<std::uint8_t>(e >> 8));
        out.push_back(static_cast<std::uint8_t>(e));
    }
    out.insert(out.end(), a.bytes.begin(), a.bytes.end());
    return out;
}

IdxArray load_idx_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                    std::istreambuf_iterator<char>());
    return parse_idx(bytes);
}

Dataset dataset_from_idx(const IdxArray& images, const IdxArray& labels, Index limit,
                         Index num_classes) {
    if (images.dims.size() != 3) throw IoError("idx images: expected 3 dimensions");
    if (labels.dims.size() != 1) throw IoError("idx labels: expected 1 dimension");
    if (images.dims[0] != labels.dims[0]) throw IoError("idx: image/label counts differ");
    Index n = images.dims[0];
    if (limit > 0 && limit < n) n = limit;
    const Index h = images.dims[1], w = images.dims[2];
    Dataset ds;
    ds.X = Tensor(Shape{n, h * w});
    std::vector<Index> lab(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i) {
        for (Index p = 0; p < h * w; ++p)
            ds.X.at(i, p) = static_cast<double>(images.bytes[static_cast<size_t>(i * h * w + p)]) / 255.0;
        lab[static_cast<size_t>(i)] = labels.bytes[static_cast<size_t>(i)];
    }
    ds.y = one_hot(lab, num_classes);
    ds.geom = {h, w, 1};
    return ds;
}

namespace {

std::vector<std::vector<double>> read_csv(const std::filesystem::path& path, size_t columns) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (lineno == 1 || line.empty()) continue;  // header
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            ++col;
            try {
                size_t used = 0;
                row.push_back(std::stod(cell, &used));
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw IoError(path.filename().string() + " row " + std::to_string(lineno) +
                              " col " + std::to_string(col) + ": cannot parse '" + cell + "'");
            }
        }
        if (row.size() != columns)
            throw IoError(path.filename().string() + " row " + std::to_string(lineno) + ": expected " +
                          std::to_string(columns) + " columns, got " + std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

Dataset load_iris_cancer(const std::filesystem::path& iris_csv,
                         const std::filesystem::path& cancer_csv, std::uint64_t seed) {
    const auto iris = read_csv(iris_csv, 5);
    const auto cancer = read_csv(cancer_csv, 31);

    std::vector<const std::vector<double>*> iris_by_class[2];
    for (const auto& r : iris) {
        const int cls = static_cast<int>(r[4]);
        if (cls == 1) iris_by_class[0].push_back(&r);
        if (cls == 2) iris_by_class[1].push_back(&r);
    }
    std::vector<const std::vector<double>*> cancer_by_class[2];
    for (const auto& r : cancer) {
        const int cls = static_cast<int>(r[30]);
        if (cls == 0 && cancer_by_class[0].size() < 50) cancer_by_class[0].push_back(&r);
        if (cls == 1 && cancer_by_class[1].size() < 50) cancer_by_class[1].push_back(&r);
    }
    for (int c = 0; c < 2; ++c) {
        if (iris_by_class[c].size() < 50)
            throw IoError("iris: need 50 rows of class " + std::to_string(c + 1) + ", got " +
                          std::to_string(iris_by_class[c].size()));
        if (cancer_by_class[c].size() < 50)
            throw IoError("breast cancer: need 50 rows of class " + std::to_string(c));
    }

    constexpr Index kDim = 34;
    Tensor X(Shape{100, kDim});
    std::vector<Index> labels(100);
    for (Index cls = 0; cls < 2; ++cls)
        for (Index i = 0; i < 50; ++i) {
            const Index row = cls * 50 + i;
            labels[static_cast<size_t>(row)] = cls;
            const auto& ir = *iris_by_class[cls][static_cast<size_t>(i)];
            const auto& ca = *cancer_by_class[cls][static_cast<size_t>(i)];
            for (Index j = 0; j < 4; ++j) X.at(row, j) = ir[static_cast<size_t>(j)];
            for (Index j = 0; j < 30; ++j) X.at(row, 4 + j) = ca[static_cast<size_t>(j)];
        }

    std::vector<Index> order(100);
    for (Index i = 0; i < 100; ++i) order[static_cast<size_t>(i)] = i;
    Rng rng(seed);
    shuffle(order, rng);

    Dataset ds;
    ds.X = Tensor(Shape{100, kDim});
    std::vector<Index> shuffled_labels(100);
    for (Index i = 0; i < 100; ++i) {
        const Index src = order[static_cast<size_t>(i)];
        shuffled_labels[static_cast<size_t>(i)] = labels[static_cast<size_t>(src)];
        for (Index j = 0; j < kDim; ++j) ds.X.at(i, j) = X.at(src, j);
    }
    ds.y = one_hot(shuffled_labels, 2);

    // Min-max scale each column over the loaded rows; constant columns sit
    // at the midpoint.
    for (Index j = 0; j < kDim; ++j) {
        double lo = ds.X.at(0, j), hi = lo;
        for (Index i = 1; i < 100; ++i) {
            lo = std::min(lo, ds.X.at(i, j));
            hi = std::max(hi, ds.X.at(i, j));
        }
        for (Index i = 0; i < 100; ++i)
            ds.X.at(i, j) = hi > lo ? (ds.X.at(i, j) - lo) / (hi - lo) : 0.5;
    }
    return ds;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double fraction,
                                             std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ValueError("train_test_split: fraction must be in (0,1)");
    const std::vector<Index> labels = argmax_rows(ds.y);
    std::vector<std::vector<Index>> by_class(static_cast<size_t>(ds.k()));
    for (Index i = 0; i < ds.n(); ++i)
        by_class[static_cast<size_t>(labels[static_cast<size_t>(i)])].push_back(i);

    Rng rng(seed);
    std::vector<Index> train_rows, test_rows;
    for (auto& idx : by_class) {
        shuffle(idx, rng);
        const auto t = static_cast<size_t>(
            std::floor(fraction * static_cast<double>(idx.size()) + 0.5));
        for (size_t i = 0; i < idx.size(); ++i)
            (i < t ? train_rows : test_rows).push_back(idx[i]);
    }
    if (train_rows.empty() || test_rows.empty())
        throw ValueError("train_test_split: degenerate split sizes");
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(test_rows.begin(), test_rows.end());
    return {subset(ds, train_rows), subset(ds, test_rows)};
}

Dataset subset(const Dataset& ds, std::span<const Index> rows) {
    Dataset out;
    out.X = Tensor(Shape{static_cast<Index>(rows.size()), ds.d()});
    out.y = Tensor(Shape{static_cast<Index>(rows.size()), ds.k()});
    const bool has_aux = !ds.aux_mask.empty();
    if (has_aux) out.aux_mask = Tensor(Shape{static_cast<Index>(rows.size()), ds.d()});
    for (size_t i = 0; i < rows.size(); ++i) {
        const Index src = rows[i];
        if (src < 0 || src >= ds.n()) throw ValueError("subset: row index out of range");
        for (Index j = 0; j < ds.d(); ++j) {
            out.X.at(static_cast<Index>(i), j) = ds.X.at(src, j);
            if (has_aux) out.aux_mask.at(static_cast<Index>(i), j) = ds.aux_mask.at(src, j);
        }
        for (Index k = 0; k < ds.k(); ++k) out.y.at(static_cast<Index>(i), k) = ds.y.at(src, k);
    }
    out.geom = ds.geom;
    return out;
}

Dataset take(const Dataset& ds, Index n) {
    if (n > ds.n()) throw ValueError("take: not enough rows");
    std::vector<Index> rows(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i) rows[static_cast<size_t>(i)] = i;
    return subset(ds, rows);
}

Dataset replace_columns(const Dataset& ds, std::span<const Index> cols, double value) {
    Dataset out = ds;
    for (Index i = 0; i < out.n(); ++i)
        for (Index j : cols) out.X.at(i, j) = value;
    return out;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path,
                  const std::map<std::string, std::string>& manifest) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    const bool has_aux = !ds.aux_mask.empty();
    const std::uint32_t header[7] = {
        static_cast<std::uint32_t>(ds.n()),  static_cast<std::uint32_t>(ds.d()),
        static_cast<std::uint32_t>(ds.k()),  static_cast<std::uint32_t>(ds.geom.height),
        static_cast<std::uint32_t>(ds.geom.width), static_cast<std::uint32_t>(ds.geom.channels),
        has_aux ? 1u : 0u};
    detail::write_u32le(os, 7);
    for (std::uint32_t v : header) detail::write_u32le(os, v);
    detail::write_f64le(os, ds.X);
    detail::write_f64le(os, ds.y);
    if (has_aux) detail::write_f64le(os, ds.aux_mask);
    if (!os) throw IoError("write failed for " + path.string());

    std::ofstream ms(path.string() + ".manifest");
    ms << "format=rrr-dataset-v1\n";
    ms << "n=" << ds.n() << "\nd=" << ds.d() << "\nk=" << ds.k() << "\n";
    if (ds.geom.present())
        ms << "geometry=" << ds.geom.height << "x" << ds.geom.width << "x" << ds.geom.channels << "\n";
    for (const auto& [k, v] : manifest) ms << k << "=" << v << "\n";
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    if (detail::read_u32le(is) != 7) throw IoError("dataset: unexpected header size");
    std::uint32_t h[7];
    for (auto& v : h) v = detail::read_u32le(is);
    Dataset ds;
    ds.X = Tensor(Shape{static_cast<Index>(h[0]), static_cast<Index>(h[1])});
    ds.y = Tensor(Shape{static_cast<Index>(h[0]), static_cast<Index>(h[2])});
    ds.geom = {static_cast<Index>(h[3]), static_cast<Index>(h[4]), static_cast<Index>(h[5])};
    detail::read_f64le(is, ds.X);
    detail::read_f64le(is, ds.y);
    if (h[6]) {
        ds.aux_mask = Tensor(Shape{static_cast<Index>(h[0]), static_cast<Index>(h[1])});
        detail::read_f64le(is, ds.aux_mask);
    }
    return ds;
}

}  // namespace rrr
