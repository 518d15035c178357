#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "memcap/data.hpp"
#include "memcap/error.hpp"
#include "memcap/io.hpp"
#include "support.hpp"

namespace memcap {
namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

struct IdxFiles {
  std::filesystem::path images, labels;
};

IdxFiles write_idx(const std::string& name, std::uint32_t count, std::uint32_t label_count,
                   std::uint32_t images_magic = 0x803, std::size_t drop_bytes = 0) {
  const auto dir = testing::scratch_dir("idx_" + name);
  std::vector<std::uint8_t> img, lbl;
  put_be32(img, images_magic);
  put_be32(img, count);
  put_be32(img, 2);
  put_be32(img, 3);
  for (std::uint32_t i = 0; i < count * 6; ++i) img.push_back(static_cast<std::uint8_t>(i * 37 % 256));
  img.resize(img.size() - drop_bytes);
  put_be32(lbl, 0x801);
  put_be32(lbl, label_count);
  for (std::uint32_t i = 0; i < label_count; ++i) lbl.push_back(static_cast<std::uint8_t>(i % 10));
  IdxFiles f{dir / "images.idx", dir / "labels.idx"};
  io::write_bytes(f.images, img);
  io::write_bytes(f.labels, lbl);
  return f;
}

TEST(LoadIdx, ParsesHeaderAndScalesPixels) {
  const auto f = write_idx("ok", 4, 4);
  const auto ds = load_idx(f.images, f.labels);
  EXPECT_EQ(ds.size(), 4u);
  EXPECT_EQ(ds.dim(), 6u);
  EXPECT_EQ(ds.num_classes, 10);
  EXPECT_EQ(ds.labels, (std::vector<int>{0, 1, 2, 3}));
  EXPECT_DOUBLE_EQ(ds.features(0, 1), 37.0 / 255.0);
  EXPECT_DOUBLE_EQ(ds.features(1, 0), (6 * 37 % 256) / 255.0);
  EXPECT_NO_THROW(ds.validate());
}

TEST(LoadIdx, RejectsWrongMagic) {
  const auto f = write_idx("magic", 4, 4, 0x802);
  try {
    load_idx(f.images, f.labels);
    FAIL() << "expected a magic-number error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
}

TEST(LoadIdx, RejectsCountMismatch) {
  const auto f = write_idx("count", 5, 4);
  try {
    load_idx(f.images, f.labels);
    FAIL() << "expected a count-mismatch error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("count mismatch"), std::string::npos);
  }
}

TEST(LoadIdx, RejectsTruncatedFile) {
  const auto f = write_idx("trunc", 4, 4, 0x803, 1);
  EXPECT_THROW(load_idx(f.images, f.labels), ValidationError);
}

TEST(LoadIdx, BundledMnistSubset) {
  if (!testing::have_mnist()) GTEST_SKIP() << "no MNIST files under " << testing::mnist_dir();
  const auto dir = testing::mnist_dir();
  const auto ds = load_idx(dir / "train-images-idx3-ubyte.gz", dir / "train-labels-idx1-ubyte.gz");
  EXPECT_EQ(ds.dim(), 784u);
  EXPECT_EQ(ds.num_classes, 10);
  EXPECT_GE(ds.size(), 1024u);
  EXPECT_GE(ds.features.minCoeff(), 0.0);
  EXPECT_LE(ds.features.maxCoeff(), 1.0);
  EXPECT_NO_THROW(ds.validate());
}

std::vector<std::uint8_t> cifar_record(std::uint8_t label) {
  std::vector<std::uint8_t> rec(3073);
  rec[0] = label;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t r = 0; r < 32; ++r) {
      for (std::size_t q = 0; q < 32; ++q) rec[1 + c * 1024 + r * 32 + q] = static_cast<std::uint8_t>(c * 80 + r + q);
    }
  }
  return rec;
}

TEST(LoadCifar, FullAndCenterCrop) {
  const auto dir = testing::scratch_dir("cifar");
  auto blob = cifar_record(3);
  const auto second = cifar_record(9);
  blob.insert(blob.end(), second.begin(), second.end());
  io::write_bytes(dir / "batch.bin", blob);
  const std::vector<std::filesystem::path> paths{dir / "batch.bin", dir / "batch.bin"};

  const auto full = load_cifar10_bin(paths, CifarOptions{false});
  EXPECT_EQ(full.size(), 4u);
  EXPECT_EQ(full.dim(), 3072u);
  EXPECT_EQ(full.labels, (std::vector<int>{3, 9, 3, 9}));
  EXPECT_DOUBLE_EQ(full.features(0, 1024 + 32 * 5 + 7), (80 + 5 + 7) / 255.0);

  const auto crop = load_cifar10_bin(paths);
  EXPECT_EQ(crop.dim(), 2352u);
  // Crop origin is (2, 2): first kept pixel of the green plane is (2, 2).
  EXPECT_DOUBLE_EQ(crop.features(0, 784), (80 + 2 + 2) / 255.0);
  EXPECT_DOUBLE_EQ(crop.features(0, 783), (27 + 2 + 27 + 2) / 255.0);
}

TEST(LoadCifar, RejectsBadLengthAndLabel) {
  const auto dir = testing::scratch_dir("cifar_bad");
  auto rec = cifar_record(1);
  rec.pop_back();
  io::write_bytes(dir / "short.bin", rec);
  const std::vector<std::filesystem::path> short_path{dir / "short.bin"};
  EXPECT_THROW(load_cifar10_bin(short_path), ValidationError);

  io::write_bytes(dir / "label.bin", cifar_record(11));
  const std::vector<std::filesystem::path> label_path{dir / "label.bin"};
  try {
    load_cifar10_bin(label_path);
    FAIL() << "expected an invalid-label error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("label byte 11"), std::string::npos);
  }
}

TEST(SynthBlobs, BalancedDistinctDeterministic) {
  const auto a = synth_blobs(100, 10, 10, 5.0, 1);
  const auto b = synth_blobs(100, 10, 10, 5.0, 1);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  std::vector<int> counts(10, 0);
  for (int l : a.labels) ++counts[l];
  for (int c : counts) EXPECT_EQ(c, 10);
  for (Eigen::Index i = 0; i < a.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < i; ++j) ASSERT_NE(a.features.row(i), a.features.row(j));
  }
  const auto c = synth_blobs(100, 10, 10, 5.0, 2);
  EXPECT_NE(a.features, c.features);
}

TEST(SynthBlobs, ClassMeansAreSeparated) {
  // With many samples the empirical class means sit `separation` apart.
  const auto ds = synth_blobs(20000, 4, 2, 6.0, 3);
  Eigen::RowVectorXd m0 = Eigen::RowVectorXd::Zero(4), m1 = Eigen::RowVectorXd::Zero(4);
  int n0 = 0, n1 = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] == 0) {
      m0 += ds.features.row(static_cast<Eigen::Index>(i));
      ++n0;
    } else {
      m1 += ds.features.row(static_cast<Eigen::Index>(i));
      ++n1;
    }
  }
  EXPECT_NEAR((m0 / n0 - m1 / n1).norm(), 6.0, 0.1);
}

TEST(SynthBlobs, ZeroSeparationIsChanceForNearestCentroid) {
  // Nearest-centroid oracle fitted on one half, scored on the other.
  const auto ds = synth_blobs(4000, 8, 4, 0.0, 4);
  Matrix centroids = Matrix::Zero(4, 8);
  std::vector<int> counts(4, 0);
  for (std::size_t i = 0; i < 2000; ++i) {
    centroids.row(ds.labels[i]) += ds.features.row(static_cast<Eigen::Index>(i));
    ++counts[static_cast<std::size_t>(ds.labels[i])];
  }
  for (int c = 0; c < 4; ++c) centroids.row(c) /= counts[static_cast<std::size_t>(c)];
  int correct = 0;
  for (std::size_t i = 2000; i < 4000; ++i) {
    Eigen::Index best = 0;
    (centroids.rowwise() - ds.features.row(static_cast<Eigen::Index>(i))).rowwise().squaredNorm().minCoeff(&best);
    correct += best == ds.labels[i];
  }
  EXPECT_NEAR(correct / 2000.0, 0.25, 0.05);
}

Dataset make(const Matrix& x, std::vector<int> labels, int k) {
  Dataset ds;
  ds.features = x;
  ds.labels = std::move(labels);
  ds.num_classes = k;
  ds.name = "t";
  return ds;
}

TEST(Whiten, HandExamples) {
  Matrix x(2, 4);
  x << 0.5, 0.5, 0.5, 0.5, 0.0, 1.0, 0.0, 1.0;
  auto out = whiten_per_image(make(x, {0, 1}, 2));
  EXPECT_EQ(out.features.row(0), Eigen::RowVectorXd::Zero(4));

  Matrix y(1, 2);
  y << 0.0, 1.0;
  out = whiten_per_image(make(y, {0}, 2));
  EXPECT_NEAR(out.features(0, 0), -0.5 / std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(out.features(0, 1), 0.5 / std::sqrt(0.5), 1e-15);
}

TEST(Whiten, ZeroMeanUnitStdAndIdempotent) {
  const Matrix x = testing::gaussian(50, 30, 5).array() * 3.0 + 2.0;
  const auto once = whiten_per_image(make(x, std::vector<int>(50, 0), 2));
  const auto twice = whiten_per_image(once);
  for (Eigen::Index i = 0; i < 50; ++i) {
    const auto row = once.features.row(i);
    EXPECT_NEAR(row.mean(), 0.0, 1e-12);
    EXPECT_NEAR(std::sqrt(row.squaredNorm() / 30.0), 1.0, 1e-12);
  }
  EXPECT_LT((twice.features - once.features).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_EQ(once.labels, std::vector<int>(50, 0));
}

TEST(RandomizeLabels, IdentityAtZeroAndChanceAtOne) {
  std::vector<int> labels(10000);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 10);
  const auto ds = make(Matrix::Zero(10000, 1), labels, 10);
  EXPECT_EQ(randomize_labels(ds, RandomizationMode::PartialCorruption, 0.0, 9).labels, labels);

  const auto random = randomize_labels(ds, RandomizationMode::RandomLabels, 0.0, 9);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) agree += random.labels[i] == labels[i];
  EXPECT_NEAR(agree / 10000.0, 0.1, 0.01);
  EXPECT_EQ(random.features, ds.features);
}

TEST(RandomizeLabels, FlipRateMatchesFormula) {
  std::vector<int> labels(20000, 3);
  const auto ds = make(Matrix::Zero(20000, 1), labels, 10);
  const auto out = randomize_labels(ds, RandomizationMode::PartialCorruption, 0.4, 11);
  std::size_t changed = 0;
  for (int l : out.labels) changed += l != 3;
  EXPECT_NEAR(changed / 20000.0, effective_flip_rate(0.4, 10), 0.01);
  EXPECT_DOUBLE_EQ(effective_flip_rate(0.4, 10), 0.36);
}

TEST(RandomizeLabels, CorruptionIsNestedInP) {
  // One seed: a label changed at p = 0.2 is changed the same way at p = 0.6.
  std::vector<int> labels(5000);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 7);
  const auto ds = make(Matrix::Zero(5000, 1), labels, 7);
  const auto lo = randomize_labels(ds, RandomizationMode::PartialCorruption, 0.2, 12);
  const auto hi = randomize_labels(ds, RandomizationMode::PartialCorruption, 0.6, 12);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (lo.labels[i] != labels[i]) {
      ASSERT_EQ(hi.labels[i], lo.labels[i]);
    }
  }
}

TEST(RandomizeLabels, RejectsPixelModeAndBadP) {
  const auto ds = make(Matrix::Zero(3, 1), {0, 1, 2}, 3);
  EXPECT_THROW(randomize_labels(ds, RandomizationMode::ShuffledPixels, 0.0, 1), ValidationError);
  EXPECT_THROW(randomize_labels(ds, RandomizationMode::PartialCorruption, 1.5, 1), ValidationError);
}

std::vector<double> sorted_row(const Matrix& m, Eigen::Index i) {
  std::vector<double> v(m.row(i).data(), m.row(i).data() + m.cols());
  std::sort(v.begin(), v.end());
  return v;
}

TEST(RandomizeInputs, ShuffledPixelsSharesOnePermutation) {
  const Matrix x = testing::gaussian(20, 16, 6);
  const Matrix t = testing::gaussian(5, 16, 7);
  Matrix marked_test = t;
  marked_test(0, 3) = 1000.0;  // marked pixel
  Matrix marked_train = x;
  marked_train(0, 3) = 1000.0;
  const auto [tr, te] = randomize_inputs(make(marked_train, std::vector<int>(20, 0), 2),
                                         make(marked_test, std::vector<int>(5, 1), 2),
                                         RandomizationMode::ShuffledPixels, 13);
  Eigen::Index train_pos = 0, test_pos = 0;
  tr.features.row(0).maxCoeff(&train_pos);
  te.features.row(0).maxCoeff(&test_pos);
  EXPECT_EQ(train_pos, test_pos);
  for (Eigen::Index i = 0; i < 20; ++i) EXPECT_EQ(sorted_row(tr.features, i), sorted_row(marked_train, i));
  // Same map for every row: locate where each source column went in row 1.
  for (Eigen::Index j = 0; j < 16; ++j) {
    Eigen::Index k = 0;
    (tr.features.row(1).array() - marked_train(1, j)).abs().minCoeff(&k);
    EXPECT_EQ(tr.features(2, k), marked_train(2, j));
  }
  EXPECT_EQ(tr.labels, std::vector<int>(20, 0));
  EXPECT_EQ(te.labels, std::vector<int>(5, 1));
}

TEST(RandomizeInputs, RandomPixelsPermutesRowsIndependently) {
  const Matrix x = testing::gaussian(10, 16, 8);
  const auto [tr, te] = randomize_inputs(make(x, std::vector<int>(10, 0), 2), make(x, std::vector<int>(10, 0), 2),
                                         RandomizationMode::RandomPixels, 14);
  for (Eigen::Index i = 0; i < 10; ++i) EXPECT_EQ(sorted_row(tr.features, i), sorted_row(x, i));
  // Where did column 0 of each row go? Not the same place in every row.
  std::set<Eigen::Index> landing;
  for (Eigen::Index i = 0; i < 10; ++i) {
    Eigen::Index k = 0;
    (tr.features.row(i).array() - x(i, 0)).abs().minCoeff(&k);
    landing.insert(k);
  }
  EXPECT_GT(landing.size(), 1u);
}

TEST(RandomizeInputs, GaussianPixelsMatchPooledMoments) {
  Rng rng(15);
  Matrix x(400, 250);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.normal(0.5, 0.2);
  }
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  const auto [tr, te] = randomize_inputs(make(x, std::vector<int>(400, 0), 2), make(x.topRows(10), std::vector<int>(10, 0), 2),
                                         RandomizationMode::GaussianPixels, 16);
  const double out_mean = tr.features.mean();
  const double out_var = (tr.features.array() - out_mean).square().mean();
  EXPECT_NEAR(out_mean, mean, 0.01);
  EXPECT_NEAR(out_var, var, 0.005);
  EXPECT_NE(tr.features, x);
}

TEST(RandomizeInputs, DimensionMismatch) {
  EXPECT_THROW(randomize_inputs(make(Matrix::Zero(2, 3), {0, 1}, 2), make(Matrix::Zero(2, 4), {0, 1}, 2),
                                RandomizationMode::ShuffledPixels, 1),
               ValidationError);
}

TEST(Randomization, PureAndRoutesByMode) {
  const Matrix x = testing::gaussian(30, 8, 17);
  std::vector<int> labels(30);
  for (int i = 0; i < 30; ++i) labels[static_cast<std::size_t>(i)] = i % 3;
  const auto train = make(x, labels, 3);
  const auto test = make(x.topRows(6), std::vector<int>(labels.begin(), labels.begin() + 6), 3);
  for (auto mode : {RandomizationMode::TrueLabels, RandomizationMode::PartialCorruption, RandomizationMode::RandomLabels,
                    RandomizationMode::ShuffledPixels, RandomizationMode::RandomPixels,
                    RandomizationMode::GaussianPixels}) {
    const RandomizationSpec spec{mode, 0.5, 18};
    const auto a = apply_randomization(train, test, spec);
    const auto b = apply_randomization(train, test, spec);
    EXPECT_EQ(a.first.features, b.first.features) << to_string(mode);
    EXPECT_EQ(a.first.labels, b.first.labels) << to_string(mode);
    EXPECT_EQ(a.second.features, b.second.features) << to_string(mode);
    EXPECT_EQ(a.second.labels, test.labels) << "test labels never change";
    const bool label_mode = mode == RandomizationMode::PartialCorruption || mode == RandomizationMode::RandomLabels;
    if (label_mode) {
      EXPECT_EQ(a.first.features, x);
    }
    if (!label_mode) {
      EXPECT_EQ(a.first.labels, labels);
    }
  }
  EXPECT_THROW(apply_randomization(train, test, RandomizationSpec{RandomizationMode::PartialCorruption, -0.1, 0}),
               ValidationError);
}

TEST(RandomizationMode, ParsesBothSpellings) {
  EXPECT_EQ(parse_randomization_mode("random_labels"), RandomizationMode::RandomLabels);
  EXPECT_EQ(parse_randomization_mode("gaussian-pixels"), RandomizationMode::GaussianPixels);
  EXPECT_THROW(parse_randomization_mode("noise"), ValidationError);
}

TEST(Dataset, ValidateCatchesBadValues) {
  auto ds = make(Matrix::Zero(2, 2), {0, 1}, 2);
  EXPECT_NO_THROW(ds.validate());
  ds.labels[1] = 2;
  EXPECT_THROW(ds.validate(), ValidationError);
  ds.labels[1] = 1;
  ds.features(0, 0) = std::nan("");
  EXPECT_THROW(ds.validate(), ValidationError);
}

}  // namespace
}  // namespace memcap
