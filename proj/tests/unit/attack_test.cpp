#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "depthpatch/attack.hpp"
#include "depthpatch/toy_unet.hpp"
#include "depthpatch/util.hpp"
#include "fixtures.hpp"

using namespace depthpatch;
using namespace depthpatch::testing;
namespace fs = std::filesystem;

namespace {

const Shape kShape{32, 64};

SceneSpec small_spec() {
  SceneSpec s;
  s.shape = kShape;
  return s;
}

AttackConfig small_config() {
  AttackConfig c;
  c.epochs = 3;
  c.batch_size = 2;
  c.patch_side = 8;
  c.patch_scale_factor = 0.4;
  c.loss_weights.gamma = 1e-3;
  c.learning_rate = 0.05;
  c.checkpoint_every = 1;
  c.seed = 5;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("depthpatch_attack_test_" + name);
  fs::remove_all(p);
  return p;
}

// Kolmogorov distribution tail P(K > lambda).
double kolmogorov_tail(double lambda) {
  double p = 0.0;
  for (int k = 1; k < 100; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

class NanModel final : public DepthModel {
 public:
  std::string name() const override { return "nan"; }
  Shape input_shape() const override { return kShape; }
  ChannelNormalization normalization() const override { return {}; }
  std::vector<double> predict_raw(const ImageTensor& image) const override {
    std::vector<double> out(image.height() * image.width());
    std::iota(out.begin(), out.end(), 0.0);
    if (poisoned_) out[3] = std::nan("");
    return out;
  }
  std::unique_ptr<ForwardPass> forward_pass(const ImageTensor& image) const override {
    struct Pass final : ForwardPass {
      std::vector<double> r;
      const std::vector<double>& raw() const override { return r; }
      std::vector<double> input_gradient(std::span<const double> g) const override {
        return std::vector<double>(g.size() * 3, std::nan(""));
      }
    };
    auto p = std::make_unique<Pass>();
    p->r = predict_raw(image);
    return p;
  }
  std::string parameter_checksum() const override { return "nan-model"; }
  void poison() const { poisoned_ = true; }

 private:
  mutable bool poisoned_ = false;
};

class AttackTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    model_ = new DepthModelHandle(make_handle(std::make_shared<ToyUNet>(3, kShape)));
    data_ = new Dataset(dataset_from_scenes(generate_corpus(6, 21, small_spec()), "s", DetectorConfig{}));
  }
  static void TearDownTestSuite() {
    delete model_;
    delete data_;
  }
  static const DepthModelHandle& model() { return *model_; }
  static std::span<const Sample> samples() { return data_->samples; }

  static DepthModelHandle* model_;
  static Dataset* data_;
};

DepthModelHandle* AttackTest::model_ = nullptr;
Dataset* AttackTest::data_ = nullptr;

}  // namespace

TEST(InitPatch, DeterministicAndUniform) {
  std::mt19937_64 a(9), b(9);
  EXPECT_EQ(init_patch(64, a).patch, init_patch(64, b).patch);
  std::mt19937_64 rng(10);
  const PatchState state = init_patch(64, rng);
  std::vector<double> v(state.patch.data().begin(), state.patch.data().end());
  std::sort(v.begin(), v.end());
  double d = 0.0;
  const double n = static_cast<double>(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    d = std::max({d, (i + 1) / n - v[i], v[i] - i / n});
  }
  const double sqrt_n = std::sqrt(n);
  EXPECT_GT(kolmogorov_tail((sqrt_n + 0.12 + 0.11 / sqrt_n) * d), 0.01);
}

TEST(InitPatch, MinimumSide) {
  std::mt19937_64 rng(1);
  const PatchState s = init_patch(2, rng);
  EXPECT_EQ(s.patch.side(), 2);
  EXPECT_EQ(s.patch.data().size(), 12u);
  EXPECT_EQ(s.optimizer.steps(), 0);
  EXPECT_THROW(init_patch(1, rng), ConfigError);
}

TEST_F(AttackTest, BatchGradientMatchesFiniteDifferences) {
  AttackConfig cfg = small_config();
  cfg.loss_weights.gamma = 0.01;
  std::mt19937_64 rng(2);
  const Patch patch = random_patch(rng, cfg.patch_side, 0.2, 0.8);
  std::vector<DisparityMap> clean;
  for (const auto& s : samples().subspan(0, 2)) clean.push_back(forward(model(), s.image));
  std::vector<BatchItem> items;
  for (std::size_t i = 0; i < 2; ++i) {
    BatchItem it{&samples()[i], &clean[i], {}};
    for (std::size_t k = 0; k < samples()[i].detections.boxes.size(); ++k) {
      TransformSample t = sample_transform(rng, TransformRanges::frozen(), cfg.patch_side);
      t.rotation_deg = 7.0;
      it.transforms.push_back(t);
    }
    items.push_back(it);
  }
  const BatchEvaluation e = evaluate_batch(patch, items, model(), cfg);
  ASSERT_GT(e.images, 0);
  const double h = 1e-4;
  double max_grad = 0.0;
  for (double g : e.grad) max_grad = std::max(max_grad, std::abs(g));
  std::uniform_int_distribution<std::size_t> pick(0, e.grad.size() - 1);
  for (int k = 0; k < 20; ++k) {
    const std::size_t i = pick(rng);
    std::vector<double> plus(patch.data().begin(), patch.data().end()), minus = plus;
    plus[i] += h;
    minus[i] -= h;
    const double fd = (evaluate_batch(Patch(cfg.patch_side, plus), items, model(), cfg).losses.l_total -
                       evaluate_batch(Patch(cfg.patch_side, minus), items, model(), cfg).losses.l_total) / (2 * h);
    EXPECT_LE(std::abs(e.grad[i] - fd), 1e-3 * max_grad + 1e-8) << i;
  }
}

TEST_F(AttackTest, ZeroLearningRateLeavesPatchButLogs) {
  AttackConfig cfg = small_config();
  cfg.learning_rate = 0.0;
  const AttackTrainer trainer(model(), samples(), cfg);
  RunState state = init_run_state(small_config());
  const Patch before = state.patch.patch;
  const std::vector<std::size_t> batch{0, 1};
  const auto rec = trainer.attack_step(state, batch);
  ASSERT_TRUE(rec);
  EXPECT_EQ(state.patch.patch, before);
  EXPECT_EQ(state.history.size(), 1u);
  EXPECT_GT(rec->losses.l_total, 0.0);
}

TEST_F(AttackTest, LossDecreasesOverFirstSteps) {
  AttackConfig cfg = small_config();
  cfg.transforms = TransformRanges::frozen();
  cfg.learning_rate = 0.02;
  const AttackTrainer trainer(model(), samples(), cfg);
  RunState state = init_run_state(cfg);
  const std::vector<std::size_t> batch{0};
  double previous = INFINITY;
  for (int step = 0; step < 5; ++step) {
    const auto rec = trainer.attack_step(state, batch);
    ASSERT_TRUE(rec);
    EXPECT_LT(rec->losses.l_total, previous) << step;
    previous = rec->losses.l_total;
  }
}

TEST_F(AttackTest, OffImagePatchPixelsAreNeverUpdated) {
  Sample corner = samples()[0];
  corner.detections.boxes = {BBox{1, 1, 20, 20, 0.9}};
  const std::vector<Sample> one{corner};
  AttackConfig cfg = small_config();
  cfg.transforms = TransformRanges::frozen();
  // The smoothness term couples every patch pixel; only the depth term is local.
  cfg.loss_weights.gamma = 0.0;
  const AttackTrainer trainer(model(), one, cfg);
  RunState state = init_run_state(cfg);
  const Patch before = state.patch.patch;
  const std::vector<std::size_t> batch{0};
  ASSERT_TRUE(trainer.attack_step(state, batch));
  // Footprint side 8 centered at (1,1): patch rows/cols 0-2 fall off-image.
  int changed = 0;
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      for (int c = 0; c < 3; ++c) {
        if (y < 3 || x < 3) {
          EXPECT_EQ(state.patch.patch.at(y, x, c), before.at(y, x, c));
        } else if (state.patch.patch.at(y, x, c) != before.at(y, x, c)) {
          ++changed;
        }
      }
    }
  }
  EXPECT_GT(changed, 0);
}

TEST_F(AttackTest, StepBookkeeping) {
  AttackConfig cfg = small_config();
  cfg.epochs = 1;
  cfg.batch_size = 8;
  EXPECT_EQ(run_attack(samples().subspan(0, 2), model(), cfg).state.history.size(), 1u);
  cfg.batch_size = 1;
  EXPECT_EQ(run_attack(samples().subspan(0, 2), model(), cfg).state.history.size(), 2u);
}

TEST_F(AttackTest, DeterministicHistoryAndFrozenVictim) {
  const AttackConfig cfg = small_config();
  const AttackResult a = run_attack(samples(), model(), cfg);
  const AttackResult b = run_attack(samples(), model(), cfg);
  EXPECT_EQ(a.state.history, b.state.history);
  EXPECT_EQ(a.state.patch.patch, b.state.patch.patch);
  EXPECT_EQ(a.checksum_before, a.checksum_after);
  EXPECT_EQ(a.checksum_before, model().parameter_checksum());
}

TEST_F(AttackTest, ResumeMatchesUninterruptedRun) {
  const AttackConfig cfg = small_config();
  const fs::path full_dir = fresh_dir("full"), cut_dir = fresh_dir("cut");
  RunOptions full;
  full.out_dir = full_dir;
  const AttackResult reference = run_attack(samples(), model(), cfg, full);

  RunOptions cut;
  cut.out_dir = cut_dir;
  cut.stop_after_epoch = 1;
  run_attack(samples(), model(), cfg, cut);
  const auto latest = latest_checkpoint(cut_dir);
  ASSERT_TRUE(latest);
  EXPECT_EQ(latest->filename(), "epoch-000001");
  RunOptions resume;
  resume.out_dir = cut_dir;
  resume.resume_from = latest;
  const AttackResult resumed = run_attack(samples(), model(), cfg, resume);
  EXPECT_EQ(resumed.state.patch.patch, reference.state.patch.patch);
  EXPECT_EQ(resumed.state.history, reference.state.history);
  EXPECT_EQ(read_file(cut_dir / "patch.png"), read_file(full_dir / "patch.png"));

  for (const char* f : {"config.yaml", "train_log.jsonl", "patch.png", "patch.json", "eval_report.json"}) {
    EXPECT_TRUE(fs::exists(cut_dir / f)) << f;
  }
  AttackConfig other = cfg;
  other.seed = 6;
  EXPECT_THROW(load_checkpoint(*latest, other), ConfigError);
  fs::remove(*latest / "state.json");
  EXPECT_THROW(load_checkpoint(*latest, cfg), DataError);
}

TEST_F(AttackTest, RejectsBadInputs) {
  AttackConfig cfg = small_config();
  DepthModelHandle thawed = model();
  thawed.frozen = false;
  EXPECT_THROW(run_attack(samples(), thawed, cfg), ConfigError);
  cfg.target_class = 1;
  std::vector<Sample> cars_only(samples().begin(), samples().end());
  for (auto& s : cars_only) s.detections.boxes.clear();
  EXPECT_THROW(run_attack(cars_only, model(), cfg), DataError);
  cfg = small_config();
  cfg.epochs = 0;
  EXPECT_THROW(run_attack(samples(), model(), cfg), ConfigError);
}

TEST_F(AttackTest, NonFiniteLossIsTrainingError) {
  const auto nan_model = std::make_shared<NanModel>();
  const DepthModelHandle handle = make_handle(nan_model);
  const AttackConfig cfg = small_config();
  const AttackTrainer trainer(handle, samples(), cfg);
  nan_model->poison();
  RunState state = init_run_state(cfg);
  const std::vector<std::size_t> batch{0, 1};
  try {
    trainer.attack_step(state, batch);
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("seed"), std::string::npos) << e.what();
  }
}
