#include "psfr/train.hpp"

#include <fstream>
#include <random>

#include "psfr/degrade.hpp"
#include "psfr/metrics.hpp"

namespace psfr {
namespace {

std::mt19937_64 step_rng(uint64_t seed, int64_t step, uint64_t stream) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(step), static_cast<uint32_t>(static_cast<uint64_t>(step) >> 32),
                    static_cast<uint32_t>(stream)};
  return std::mt19937_64(seq);
}

TrainingBatch degrade_entries(const FaceDataset& data, const std::vector<size_t>& indices, std::mt19937_64& rng) {
  TrainingBatch b;
  b.indices = indices;
  std::vector<Image8> hq, lq;
  std::vector<torch::Tensor> labels;
  for (size_t i : indices) {
    const auto& sample = data[i];
    auto params = degrade::sample_params(rng());
    hq.push_back(sample.hq);
    lq.push_back(degrade::degrade(sample.hq, params, sample.hq.height()));
    labels.push_back(sample.labels);
    b.params.push_back(params);
  }
  b.hq = to_tensor(hq);
  b.lq = to_tensor(lq);
  b.labels = torch::stack(labels);
  return b;
}

/// Architecture sections of a checkpoint's config echo must match the live config.
void require_same_section(const checkpoint::Checkpoint& ckpt, const PipelineConfig& config,
                          const std::string& section) {
  const auto saved = IniDocument::parse(ckpt.config).section(section);
  const auto live = config.to_ini().section(section);
  if (saved != live) {
    throw CheckpointError("checkpoint [" + section + "] configuration does not match the current config");
  }
}

void require_kind(const checkpoint::Checkpoint& ckpt, const std::string& kind) {
  if (ckpt.kind != kind) {
    throw CheckpointError("expected a '" + kind + "' checkpoint, got '" + ckpt.kind + "'");
  }
}

std::ofstream open_log(const std::filesystem::path& path, bool append, const std::string& header) {
  const bool fresh = !append || !std::filesystem::exists(path);
  std::ofstream out(path, fresh ? std::ios::trunc : std::ios::app);
  if (!out) throw IoError(path, "cannot open loss log");
  if (fresh) out << header << '\n';
  out.precision(9);
  return out;
}

}  // namespace

TrainingBatch make_training_batch(const FaceDataset& data, int64_t batch, uint64_t seed, int64_t step,
                                  uint64_t stream) {
  if (data.empty()) throw std::invalid_argument("dataset is empty");
  auto rng = step_rng(seed, step, stream);
  std::uniform_int_distribution<size_t> pick(0, data.size() - 1);
  std::vector<size_t> indices(static_cast<size_t>(batch));
  for (auto& i : indices) i = pick(rng);
  return degrade_entries(data, indices, rng);
}

TrainingBatch make_eval_set(const FaceDataset& data, uint64_t seed) {
  if (data.empty()) throw std::invalid_argument("dataset is empty");
  std::mt19937_64 rng(seed);
  std::vector<size_t> indices(data.size());
  for (size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  return degrade_entries(data, indices, rng);
}

// ---------------------------------------------------------------------------
// FPN

FpnTrainer::FpnTrainer(PipelineConfig config, FaceDataset data)
    : config_(std::move(config)), data_(std::move(data)) {
  config_.validate();
  if (data_.empty()) throw std::invalid_argument("FPN training needs a non-empty dataset");
  if (data_.resolution() != config_.fpn.in_resolution) {
    throw std::invalid_argument("dataset resolution does not match fpn.in_resolution");
  }
  torch::manual_seed(config_.train.seed);
  model_ = parsing::FaceParsingNet(config_.fpn);
  optimizer_ = std::make_unique<torch::optim::Adam>(
      model_->parameters(), torch::optim::AdamOptions(config_.train.lr_fpn)
                                .betas({config_.train.adam_beta1_fpn, config_.train.adam_beta2}));
}

FpnStepLog FpnTrainer::step() {
  model_->train();
  auto batch = make_training_batch(data_, config_.train.batch_fpn, config_.train.seed, step_, /*stream=*/0);
  auto out = model_->forward(batch.lq);
  auto loss = parsing::fpn_loss(out.logits, out.restored, batch.labels, batch.hq);
  optimizer_->zero_grad();
  loss.total.backward();
  optimizer_->step();
  ++step_;
  return {step_, loss.parse.item<double>(), loss.pix.item<double>(), loss.total.item<double>()};
}

checkpoint::Checkpoint FpnTrainer::save() const {
  checkpoint::Checkpoint ckpt;
  ckpt.kind = "fpn";
  ckpt.config = config_.to_ini().to_string();
  ckpt.step = step_;
  checkpoint::store_module(ckpt, *model_, "fpn.");
  checkpoint::store_adam(ckpt, *optimizer_, "optim.");
  return ckpt;
}

void FpnTrainer::load(const checkpoint::Checkpoint& ckpt) {
  require_kind(ckpt, "fpn");
  require_same_section(ckpt, config_, "fpn");
  checkpoint::load_module(*model_, ckpt, "fpn.");
  checkpoint::load_adam(*optimizer_, ckpt, "optim.");
  step_ = ckpt.step;
}

double FpnTrainer::accuracy(const TrainingBatch& set) {
  torch::NoGradGuard no_grad;
  model_->eval();
  auto pred = parsing::argmax_labels(model_->forward(set.lq).logits);
  model_->train();
  return parsing::pixel_accuracy(pred, set.labels);
}

// ---------------------------------------------------------------------------
// PSFR-GAN

losses::FeatureExtractor make_extractor(const ExtractorConfig& config) {
  if (config.kind == "vgg19") {
    auto vgg = losses::make_vgg19_extractor();
    if (config.weights.empty()) throw ConfigError("[extractor] weights is required for kind = vgg19");
    vgg->load_weights(config.weights);
    vgg->eval();
    return vgg;
  }
  auto net = losses::make_random_extractor(config.channels, config.seed);
  net->eval();
  return net;
}

parsing::FaceParsingNet load_fpn(const checkpoint::Checkpoint& ckpt) {
  require_kind(ckpt, "fpn");
  parsing::FaceParsingNet net(parsing::FpnConfig::from_map(IniDocument::parse(ckpt.config).section("fpn")));
  checkpoint::load_module(*net, ckpt, "fpn.");
  net->eval();
  return net;
}

generator::Generator load_generator(const checkpoint::Checkpoint& ckpt) {
  require_kind(ckpt, "psfr");
  generator::Generator gen(
      generator::GenConfig::from_map(IniDocument::parse(ckpt.config).section("generator")));
  checkpoint::load_module(*gen, ckpt, "gen.");
  gen->eval();
  return gen;
}

PsfrTrainer::PsfrTrainer(PipelineConfig config, FaceDataset data, std::optional<checkpoint::Checkpoint> fpn)
    : config_(std::move(config)), data_(std::move(data)) {
  config_.validate();
  if (data_.empty()) throw std::invalid_argument("PSFR training needs a non-empty dataset");
  if (data_.resolution() != config_.train.resolution) {
    throw std::invalid_argument("dataset resolution does not match train.resolution");
  }
  torch::manual_seed(config_.train.seed);
  gen_ = generator::Generator(config_.generator);
  disc_ = discriminator::MultiScaleDiscriminator(config_.discriminator);
  extractor_ = make_extractor(config_.extractor);
  if (config_.train.label_source == LabelSource::kFpn) {
    if (!fpn) throw std::invalid_argument("label_source = fpn requires an FPN checkpoint");
    fpn_ = load_fpn(*fpn);
    if (fpn_->config().in_resolution != config_.train.resolution) {
      throw CheckpointError("FPN checkpoint resolution does not match train.resolution");
    }
  }
  const auto& t = config_.train;
  opt_g_ = std::make_unique<torch::optim::Adam>(
      gen_->parameters(), torch::optim::AdamOptions(t.lr_g).betas({t.adam_beta1_psfr, t.adam_beta2}));
  opt_d_ = std::make_unique<torch::optim::Adam>(
      disc_->parameters(), torch::optim::AdamOptions(t.lr_d).betas({t.adam_beta1_psfr, t.adam_beta2}));
}

torch::Tensor PsfrTrainer::labels_for(const torch::Tensor& lq, const torch::Tensor& gt_labels) {
  if (config_.train.label_source == LabelSource::kGroundTruth) return gt_labels;
  torch::NoGradGuard no_grad;
  return parsing::argmax_labels(fpn_->forward(lq).logits);
}

PsfrStepLog PsfrTrainer::step() {
  gen_->train();
  disc_->train();
  auto batch = make_training_batch(data_, config_.train.batch_psfr, config_.train.seed, step_, /*stream=*/1);
  auto labels = labels_for(batch.lq, batch.labels);
  auto fake = gen_->forward(batch.lq, labels);

  auto scores = [](const std::vector<discriminator::DiscOutput>& outs) {
    std::vector<torch::Tensor> s;
    for (const auto& o : outs) s.push_back(o.score);
    return s;
  };
  auto features = [](const std::vector<discriminator::DiscOutput>& outs) {
    losses::ScaleFeatures f;
    for (const auto& o : outs) f.push_back(o.features);
    return f;
  };

  if (phase_hook_) phase_hook_("D");
  auto real_out = disc_->forward(batch.hq);
  auto fake_out = disc_->forward(fake.detach());
  auto l_d = losses::gan_d_loss(scores(real_out), scores(fake_out));
  opt_d_->zero_grad();
  l_d.backward();
  opt_d_->step();

  if (phase_hook_) phase_hook_("G");
  fake_out = disc_->forward(fake);
  {
    torch::NoGradGuard no_grad;
    real_out = disc_->forward(batch.hq);
  }
  losses::GeneratorLossParts<torch::Tensor> parts{
      losses::semantic_style_loss(fake, batch.hq, batch.labels, *extractor_),
      losses::reconstruction_loss(fake, batch.hq, features(fake_out), features(real_out)),
      losses::gan_g_loss(scores(fake_out))};
  auto total = losses::total_g_loss(parts, config_.loss);
  opt_g_->zero_grad();
  total.backward();
  opt_g_->step();

  ++step_;
  return {step_, parts.style.item<double>(), parts.reconstruction.item<double>(),
          parts.adversarial.item<double>(), l_d.item<double>(), total.item<double>()};
}

checkpoint::Checkpoint PsfrTrainer::save() const {
  checkpoint::Checkpoint ckpt;
  ckpt.kind = "psfr";
  ckpt.config = config_.to_ini().to_string();
  ckpt.step = step_;
  checkpoint::store_module(ckpt, *gen_, "gen.");
  checkpoint::store_module(ckpt, *disc_, "disc.");
  checkpoint::store_adam(ckpt, *opt_g_, "optim_g.");
  checkpoint::store_adam(ckpt, *opt_d_, "optim_d.");
  return ckpt;
}

void PsfrTrainer::load(const checkpoint::Checkpoint& ckpt) {
  require_kind(ckpt, "psfr");
  require_same_section(ckpt, config_, "generator");
  require_same_section(ckpt, config_, "discriminator");
  checkpoint::load_module(*gen_, ckpt, "gen.");
  checkpoint::load_module(*disc_, ckpt, "disc.");
  checkpoint::load_adam(*opt_g_, ckpt, "optim_g.");
  checkpoint::load_adam(*opt_d_, ckpt, "optim_d.");
  step_ = ckpt.step;
}

torch::Tensor PsfrTrainer::restore_eval(const TrainingBatch& set) {
  torch::NoGradGuard no_grad;
  gen_->eval();
  auto out = gen_->forward(set.lq, labels_for(set.lq, set.labels));
  gen_->train();
  return out;
}

double PsfrTrainer::restoration_psnr(const TrainingBatch& set) {
  auto out = restore_eval(set);
  double sum = 0.0;
  for (int64_t i = 0; i < out.size(0); ++i) {
    sum += metrics::psnr(to_image(out[i]), data_[set.indices[static_cast<size_t>(i)]].hq);
  }
  return sum / static_cast<double>(out.size(0));
}

double PsfrTrainer::style_loss(const TrainingBatch& set) {
  auto out = restore_eval(set);
  torch::NoGradGuard no_grad;
  return losses::semantic_style_loss(out, set.hq, set.labels, *extractor_).item<double>();
}

// ---------------------------------------------------------------------------
// Runs

checkpoint::Checkpoint train_fpn(const PipelineConfig& config, const FaceDataset& data, const RunOptions& options) {
  std::filesystem::create_directories(options.out_dir);
  FpnTrainer trainer(config, data);
  if (options.resume) trainer.load(checkpoint::read(*options.resume));
  auto log = open_log(options.out_dir / "loss.csv", options.resume.has_value(), "step,l_parse,l_pix,total");
  const auto ckpt_path = options.out_dir / "fpn.ckpt";
  while (trainer.steps_done() < config.train.max_steps) {
    auto s = trainer.step();
    if (s.step % config.train.log_every == 0) {
      log << s.step << ',' << s.parse << ',' << s.pix << ',' << s.total << '\n';
      if (options.progress) *options.progress << "fpn step " << s.step << " loss " << s.total << '\n';
    }
    if (config.train.checkpoint_every > 0 && s.step % config.train.checkpoint_every == 0) {
      checkpoint::write(ckpt_path, trainer.save());
    }
  }
  auto ckpt = trainer.save();
  checkpoint::write(ckpt_path, ckpt);
  return ckpt;
}

checkpoint::Checkpoint train_psfr(const PipelineConfig& config, const FaceDataset& data,
                                  std::optional<checkpoint::Checkpoint> fpn, const RunOptions& options) {
  std::filesystem::create_directories(options.out_dir);
  PsfrTrainer trainer(config, data, std::move(fpn));
  if (options.resume) trainer.load(checkpoint::read(*options.resume));
  auto log = open_log(options.out_dir / "loss.csv", options.resume.has_value(), "step,l_ss,l_rec,l_g,l_d,total");
  const auto ckpt_path = options.out_dir / "psfr.ckpt";
  while (trainer.steps_done() < config.train.max_steps) {
    auto s = trainer.step();
    if (s.step % config.train.log_every == 0) {
      log << s.step << ',' << s.l_ss << ',' << s.l_rec << ',' << s.l_g << ',' << s.l_d << ',' << s.total << '\n';
      if (options.progress) *options.progress << "psfr step " << s.step << " total " << s.total << '\n';
    }
    if (config.train.checkpoint_every > 0 && s.step % config.train.checkpoint_every == 0) {
      checkpoint::write(ckpt_path, trainer.save());
    }
  }
  auto ckpt = trainer.save();
  checkpoint::write(ckpt_path, ckpt);
  return ckpt;
}

}  // namespace psfr
