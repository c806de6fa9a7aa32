#include "rrr/data.hpp"

#include "rrr/rng.hpp"

#include <doctest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace rrr;

namespace {

// Independent re-implementation of the two class rules, reading raw pixels.
int pixel_color(const Dataset& ds, Index row, Index r, Index c) {
    const Index base = (r * 5 + c) * 3;
    for (int color = 0; color < 4; ++color) {
        bool match = true;
        for (Index ch = 0; ch < 3; ++ch)
            match = match && ds.X.at(row, base + ch) == kToyColorPalette[color][ch];
        if (match) return color;
    }
    return -1;
}

bool corners_all_equal(const Dataset& ds, Index row) {
    const int c0 = pixel_color(ds, row, 0, 0);
    return c0 >= 0 && c0 == pixel_color(ds, row, 0, 4) && c0 == pixel_color(ds, row, 4, 0) &&
           c0 == pixel_color(ds, row, 4, 4);
}

bool top_middle_all_distinct(const Dataset& ds, Index row) {
    const int a = pixel_color(ds, row, 0, 1), b = pixel_color(ds, row, 0, 2),
              c = pixel_color(ds, row, 0, 3);
    return a >= 0 && b >= 0 && c >= 0 && a != b && b != c && a != c;
}

}  // namespace

TEST_CASE("toy color generator satisfies its class predicates exactly") {
    Dataset ds = gen_toy_color(1000, 42);
    ds.validate();
    CHECK(ds.d() == 75);
    CHECK(ds.k() == 2);
    Index class0 = 0;
    for (Index i = 0; i < ds.n(); ++i) {
        const bool is_class0 = ds.y.at(i, 0) == 1.0;
        class0 += is_class0;
        for (Index j = 0; j < ds.d(); ++j)
            CHECK((ds.X.at(i, j) == 0.0 || ds.X.at(i, j) == 1.0));
        if (is_class0) {
            CHECK(corners_all_equal(ds, i));
            CHECK(top_middle_all_distinct(ds, i));
        } else {
            CHECK_FALSE(corners_all_equal(ds, i));
            CHECK_FALSE(top_middle_all_distinct(ds, i));
        }
    }
    CHECK(class0 == 500);

    Dataset again = gen_toy_color(1000, 42);
    CHECK(allclose(ds.X, again.X, 0.0));
    CHECK_THROWS_AS(gen_toy_color(999, 0), ValueError);
}

TEST_CASE("decoy injection rewrites exactly one 4x4 corner block") {
    // Synthetic 10-class digits: random pixels, labels cycling 0..9.
    const Index n = 40, h = 12, w = 10;
    Rng rng(3);
    Dataset base;
    base.X = Tensor(Shape{n, h * w});
    for (Index i = 0; i < base.X.numel(); ++i) base.X[i] = rng.uniform();
    std::vector<Index> labels(n);
    for (Index i = 0; i < n; ++i) labels[i] = i % 10;
    base.y = one_hot(labels, 10);
    base.geom = {h, w, 1};

    Dataset train = inject_decoy(base, DecoyMode::train, 5);
    for (Index i = 0; i < n; ++i) {
        Index diffs = 0;
        double shade = -1;
        for (Index j = 0; j < base.d(); ++j)
            if (train.X.at(i, j) != base.X.at(i, j) || train.aux_mask.at(i, j) == 1.0) {
                CHECK(train.aux_mask.at(i, j) == 1.0);
                shade = train.X.at(i, j);
                ++diffs;
            }
        CHECK(diffs == 16);
        CHECK(shade == doctest::Approx((255.0 - 25.0 * static_cast<double>(labels[i])) / 255.0)
                           .epsilon(1e-15));
    }
    // Shade endpoints from the stated formula.
    CHECK((255.0 - 25.0 * 0) / 255.0 == 1.0);
    CHECK((255.0 - 25.0 * 9) / 255.0 == doctest::Approx(30.0 / 255.0));

    SUBCASE("test-mode shades are independent of the label (chi-square)") {
        const Index big = 10000;
        Dataset big_base;
        big_base.X = Tensor(Shape{big, h * w});
        std::vector<Index> big_labels(big);
        for (Index i = 0; i < big; ++i) big_labels[i] = i % 10;
        big_base.y = one_hot(big_labels, 10);
        big_base.geom = {h, w, 1};
        Dataset test = inject_decoy(big_base, DecoyMode::test, 11);

        // Contingency of shade index x label.
        std::array<std::array<double, 10>, 10> table{};
        for (Index i = 0; i < big; ++i) {
            double shade = -1;
            for (Index j = 0; j < test.d(); ++j)
                if (test.aux_mask.at(i, j) == 1.0) {
                    shade = test.X.at(i, j);
                    break;
                }
            const auto digit = static_cast<size_t>(std::llround((255.0 - shade * 255.0) / 25.0));
            table[digit][static_cast<size_t>(big_labels[i])] += 1.0;
        }
        double chi2 = 0;
        for (size_t s = 0; s < 10; ++s)
            for (size_t l = 0; l < 10; ++l) {
                double rs = 0, cs = 0;
                for (size_t k = 0; k < 10; ++k) {
                    rs += table[s][k];
                    cs += table[k][l];
                }
                const double expect = rs * cs / static_cast<double>(big);
                chi2 += (table[s][l] - expect) * (table[s][l] - expect) / expect;
            }
        CHECK(chi2 < 113.51);  // chi2(0.99, df=81): do not reject independence
    }

    SUBCASE("contract violations") {
        Dataset small = base;
        small.geom = {6, 6, 1};
        small.X = Tensor(Shape{n, 36});
        CHECK_THROWS_AS(inject_decoy(small, DecoyMode::train, 0), ValueError);
        Dataset twoclass = base;
        twoclass.y = one_hot(std::vector<Index>(n, 0), 2);
        CHECK_THROWS_AS(inject_decoy(twoclass, DecoyMode::train, 0), ValueError);
    }
}

TEST_CASE("decoy toy color marks its bottom-middle gray pixels") {
    Dataset train = gen_decoy_color(200, DecoyMode::train, 9, 0.0);
    Dataset base = gen_toy_color(200, 9);
    for (Index i = 0; i < train.n(); ++i) {
        Index marked = 0;
        for (Index j = 0; j < train.d(); ++j) {
            if (train.aux_mask.at(i, j) == 1.0) {
                ++marked;
                const double expected = train.y.at(i, 0) == 1.0 ? 1.0 : 30.0 / 255.0;
                CHECK(train.X.at(i, j) == expected);
            } else {
                CHECK(train.X.at(i, j) == base.X.at(i, j));
            }
        }
        CHECK(marked == 9);
    }

    // Test mode: both shades occur for both labels.
    Dataset test = gen_decoy_color(2000, DecoyMode::test, 10);
    std::array<std::array<Index, 2>, 2> counts{};
    for (Index i = 0; i < test.n(); ++i) {
        double shade = -1;
        for (Index j = 0; j < test.d(); ++j)
            if (test.aux_mask.at(i, j) == 1.0) {
                shade = test.X.at(i, j);
                break;
            }
        counts[shade == 1.0 ? 0 : 1][test.y.at(i, 0) == 1.0 ? 0 : 1] += 1;
    }
    for (auto& row : counts)
        for (Index c : row) CHECK(c > 350);  // near 500 each under independence

    SUBCASE("train-mode rule noise scrambles about the stated fraction") {
        Dataset noisy = gen_decoy_color(2000, DecoyMode::train, 9, 0.25);
        Dataset clean = gen_toy_color(2000, 9);
        Index scrambled = 0;
        for (Index i = 0; i < noisy.n(); ++i) {
            bool differs = false;
            for (Index j = 0; j < noisy.d() && !differs; ++j)
                if (noisy.aux_mask.at(i, j) == 0.0 && noisy.X.at(i, j) != clean.X.at(i, j))
                    differs = true;
            scrambled += differs;
        }
        CHECK(scrambled > 300);
        CHECK(scrambled < 700);  // ~500 expected, minus accidental no-op redraws

        // Test mode never scrambles rule pixels.
        Dataset test_clean = gen_decoy_color(500, DecoyMode::test, 9, 0.5);
        Dataset base500 = gen_toy_color(500, 9);
        for (Index i = 0; i < test_clean.n(); ++i)
            for (Index j = 0; j < test_clean.d(); ++j)
                if (test_clean.aux_mask.at(i, j) == 0.0)
                    CHECK(test_clean.X.at(i, j) == base500.X.at(i, j));
    }
}

TEST_CASE("quadrant2d lives strictly inside opposite quadrants") {
    Dataset ds = gen_quadrant2d(200, 1);
    Index per_class[2] = {0, 0};
    for (Index i = 0; i < ds.n(); ++i) {
        const bool c0 = ds.y.at(i, 0) == 1.0;
        per_class[c0 ? 0 : 1]++;
        for (Index j = 0; j < 2; ++j) {
            CHECK(std::abs(ds.X.at(i, j)) >= 0.1);
            CHECK(std::abs(ds.X.at(i, j)) <= 1.0);
            if (c0)
                CHECK(ds.X.at(i, j) > 0);
            else
                CHECK(ds.X.at(i, j) < 0);
        }
    }
    CHECK(per_class[0] == 100);
    CHECK(per_class[1] == 100);
    CHECK_THROWS_AS(gen_quadrant2d(7, 0), ValueError);
}

TEST_CASE("idx parsing") {
    SUBCASE("label vector") {
        const std::vector<std::uint8_t> bytes = {0, 0, 8, 1, 0, 0, 0, 3, 5, 0, 4};
        IdxArray a = parse_idx(bytes);
        CHECK(a.dims == std::vector<Index>{3});
        CHECK(a.bytes == std::vector<std::uint8_t>{5, 0, 4});
    }
    SUBCASE("image block and scaling") {
        const std::vector<std::uint8_t> bytes = {0, 0, 8,   3,   0,  0, 0, 1, 0, 0,
                                                 0, 2, 0,   0,   0,  2, 0, 255, 128, 64};
        IdxArray a = parse_idx(bytes);
        CHECK(a.dims == std::vector<Index>{1, 2, 2});
        IdxArray labels;
        labels.dims = {1};
        labels.bytes = {7};
        Dataset ds = dataset_from_idx(a, labels);
        CHECK(ds.X.at(0, 0) == 0.0);
        CHECK(ds.X.at(0, 1) == 1.0);
        CHECK(ds.X.at(0, 2) == doctest::Approx(128.0 / 255.0));
        CHECK(ds.X.at(0, 3) == doctest::Approx(64.0 / 255.0));
        CHECK(ds.y.at(0, 7) == 1.0);
    }
    SUBCASE("distinct failure modes") {
        CHECK_THROWS_WITH_AS(parse_idx(std::vector<std::uint8_t>{1, 0, 8, 1, 0, 0, 0, 0}),
                             doctest::Contains("magic"), IoError);
        CHECK_THROWS_WITH_AS(parse_idx(std::vector<std::uint8_t>{0, 0, 9, 1, 0, 0, 0, 0}),
                             doctest::Contains("type"), IoError);
        CHECK_THROWS_WITH_AS(parse_idx(std::vector<std::uint8_t>{0, 0, 8, 1, 0, 0, 0, 3, 5}),
                             doctest::Contains("truncated payload"), IoError);
    }
    SUBCASE("round-trip property") {
        Rng rng(8);
        for (int trial = 0; trial < 20; ++trial) {
            IdxArray a;
            const int ndim = 1 + static_cast<int>(rng.below(3));
            for (int d = 0; d < ndim; ++d) a.dims.push_back(1 + static_cast<Index>(rng.below(6)));
            for (Index i = 0; i < a.numel(); ++i)
                a.bytes.push_back(static_cast<std::uint8_t>(rng.below(256)));
            IdxArray b = parse_idx(idx_bytes(a));
            CHECK(b.dims == a.dims);
            CHECK(b.bytes == a.bytes);
        }
    }
}

TEST_CASE("iris-cancer composite loader") {
    const auto root = std::filesystem::path(RRR_SOURCE_DIR) / "data";
    Dataset ds = load_iris_cancer(root / "iris.csv", root / "breast_cancer.csv", 0);
    ds.validate();
    CHECK(ds.n() == 100);
    CHECK(ds.d() == 34);
    Index label0 = 0;
    for (Index i = 0; i < ds.n(); ++i) label0 += ds.y.at(i, 0) == 1.0;
    CHECK(label0 == 50);
    for (Index i = 0; i < ds.n(); ++i)
        for (Index j = 0; j < ds.d(); ++j) {
            CHECK(ds.X.at(i, j) >= 0.0);
            CHECK(ds.X.at(i, j) <= 1.0);
        }

    SUBCASE("deterministic per seed") {
        Dataset again = load_iris_cancer(root / "iris.csv", root / "breast_cancer.csv", 0);
        CHECK(allclose(ds.X, again.X, 0.0));
    }

    SUBCASE("removing iris changes exactly the first four columns") {
        const Index cols[4] = {0, 1, 2, 3};
        Dataset wiped = replace_columns(ds, cols, 0.5);
        for (Index i = 0; i < ds.n(); ++i)
            for (Index j = 0; j < ds.d(); ++j) {
                if (j < 4)
                    CHECK(wiped.X.at(i, j) == 0.5);
                else
                    CHECK(wiped.X.at(i, j) == ds.X.at(i, j));
            }
    }

    SUBCASE("parse errors carry row and column positions") {
        const auto bad = std::filesystem::temp_directory_path() / "rrr_bad.csv";
        {
            std::ofstream os(bad);
            os << "a,b,c,d,class\n1.0,2.0,oops,4.0,1\n";
        }
        CHECK_THROWS_WITH_AS(load_iris_cancer(bad, root / "breast_cancer.csv", 0),
                             doctest::Contains("row 2 col 3"), IoError);
        std::filesystem::remove(bad);
    }
}

TEST_CASE("stratified split partitions rows deterministically") {
    Dataset ds = gen_toy_color(100, 5);
    auto [train, test] = train_test_split(ds, 2.0 / 3.0, 17);
    CHECK(train.n() == 66);
    CHECK(test.n() == 34);

    Index train0 = 0, test0 = 0;
    for (Index i = 0; i < train.n(); ++i) train0 += train.y.at(i, 0) == 1.0;
    for (Index i = 0; i < test.n(); ++i) test0 += test.y.at(i, 0) == 1.0;
    CHECK(std::abs(train0 - 33) <= 1);
    CHECK(std::abs(test0 - 17) <= 1);

    // Every original row appears exactly once across the two sides.
    std::multiset<std::string> combined;
    auto row_key = [](const Dataset& d, Index i) {
        std::string key;
        for (Index j = 0; j < d.d(); ++j) key += d.X.at(i, j) == 1.0 ? '1' : '0';
        return key;
    };
    for (Index i = 0; i < train.n(); ++i) combined.insert(row_key(train, i));
    for (Index i = 0; i < test.n(); ++i) combined.insert(row_key(test, i));
    std::multiset<std::string> original;
    for (Index i = 0; i < ds.n(); ++i) original.insert(row_key(ds, i));
    CHECK(combined == original);

    auto [train2, test2] = train_test_split(ds, 2.0 / 3.0, 17);
    CHECK(allclose(train.X, train2.X, 0.0));
    CHECK(allclose(test.X, test2.X, 0.0));

    CHECK_THROWS_AS(train_test_split(ds, 0.0, 0), ValueError);
    CHECK_THROWS_AS(train_test_split(ds, 1.0, 0), ValueError);
}

TEST_CASE("dataset container round-trip") {
    Dataset ds = gen_decoy_color(50, DecoyMode::train, 2);
    const auto path = std::filesystem::temp_directory_path() / "rrr_ds_test.bin";
    save_dataset(ds, path, {{"kind", "decoy_color"}});
    Dataset back = load_dataset(path);
    CHECK(allclose(ds.X, back.X, 0.0));
    CHECK(allclose(ds.y, back.y, 0.0));
    CHECK(allclose(ds.aux_mask, back.aux_mask, 0.0));
    CHECK(back.geom.height == 5);
    CHECK(back.geom.channels == 3);
    std::filesystem::remove(path);
    std::filesystem::remove(path.string() + ".manifest");
}
