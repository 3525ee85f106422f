#include "psfr/pipeline.hpp"

#include <stdexcept>

#include <torch/torch.h>

namespace psfr {

void TrainConfig::validate() const {
  if (!(lr_g > 0 && lr_d > 0 && lr_fpn > 0)) throw ConfigError("learning rates must be positive");
  if (!(adam_beta1_psfr >= 0 && adam_beta1_psfr < 1 && adam_beta1_fpn >= 0 && adam_beta1_fpn < 1 &&
        adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (batch_psfr < 1 || batch_fpn < 1) throw ConfigError("batch sizes must be positive");
  if (resolution < 1 || (resolution & (resolution - 1)) != 0) {
    throw ConfigError("resolution must be a power of two");
  }
  if (max_steps < 0 || log_every < 1 || checkpoint_every < 0) throw ConfigError("invalid step settings");
}

void PipelineConfig::validate() const {
  train.validate();
  try {
    loss.validate();
    generator.validate();
    discriminator.validate();
    fpn.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (train.resolution < generator.base_resolution) {
    throw ConfigError("resolution must be at least the generator base resolution");
  }
  if (generator.output_resolution() != train.resolution) {
    throw ConfigError("generator output resolution " + std::to_string(generator.output_resolution()) +
                      " does not match train.resolution " + std::to_string(train.resolution));
  }
  if (fpn.in_resolution != train.resolution) {
    throw ConfigError("fpn.in_resolution must match train.resolution");
  }
  if (extractor.kind != "random" && extractor.kind != "vgg19") {
    throw ConfigError("extractor.kind must be 'random' or 'vgg19'");
  }
  if (data.synthetic_count < 0) throw ConfigError("data.synthetic_count must be >= 0");
}

IniDocument PipelineConfig::to_ini() const {
  IniDocument doc;
  auto& t = doc.sections["train"];
  t["lr_g"] = format_double(train.lr_g);
  t["lr_d"] = format_double(train.lr_d);
  t["adam_beta1_psfr"] = format_double(train.adam_beta1_psfr);
  t["adam_beta2"] = format_double(train.adam_beta2);
  t["adam_beta1_fpn"] = format_double(train.adam_beta1_fpn);
  t["lr_fpn"] = format_double(train.lr_fpn);
  t["batch_psfr"] = std::to_string(train.batch_psfr);
  t["batch_fpn"] = std::to_string(train.batch_fpn);
  t["resolution"] = std::to_string(train.resolution);
  t["seed"] = std::to_string(train.seed);
  t["max_steps"] = std::to_string(train.max_steps);
  t["log_every"] = std::to_string(train.log_every);
  t["checkpoint_every"] = std::to_string(train.checkpoint_every);
  t["label_source"] = train.label_source == LabelSource::kFpn ? "fpn" : "gt";
  t["deterministic"] = train.deterministic ? "true" : "false";

  doc.sections["loss"] = loss.to_map();
  doc.sections["generator"] = generator.to_map();
  doc.sections["discriminator"] = discriminator.to_map();
  doc.sections["fpn"] = fpn.to_map();

  auto& e = doc.sections["extractor"];
  e["kind"] = extractor.kind;
  e["channels"] = join_ints(extractor.channels);
  e["seed"] = std::to_string(extractor.seed);
  e["weights"] = extractor.weights;

  auto& d = doc.sections["data"];
  d["hq_dir"] = data.hq_dir;
  d["label_dir"] = data.label_dir;
  d["synthetic_count"] = std::to_string(data.synthetic_count);
  d["synthetic_classes"] = join_ints(data.synthetic_classes);
  d["synthetic_seed"] = std::to_string(data.synthetic_seed);

  auto& o = doc.sections["output"];
  o["dir"] = output.dir;
  o["fpn_checkpoint"] = output.fpn_checkpoint;
  return doc;
}

PipelineConfig PipelineConfig::from_ini(const IniDocument& doc) {
  doc.require_sections({"train", "loss", "generator", "discriminator", "fpn", "extractor", "data", "output"});
  PipelineConfig c;
  {
    KeyReader r(doc.section("train"), "train");
    r.get("lr_g", c.train.lr_g);
    r.get("lr_d", c.train.lr_d);
    r.get("adam_beta1_psfr", c.train.adam_beta1_psfr);
    r.get("adam_beta2", c.train.adam_beta2);
    r.get("adam_beta1_fpn", c.train.adam_beta1_fpn);
    r.get("lr_fpn", c.train.lr_fpn);
    r.get("batch_psfr", c.train.batch_psfr);
    r.get("batch_fpn", c.train.batch_fpn);
    r.get("resolution", c.train.resolution);
    r.get("seed", c.train.seed);
    r.get("max_steps", c.train.max_steps);
    r.get("log_every", c.train.log_every);
    r.get("checkpoint_every", c.train.checkpoint_every);
    std::string source = "gt";
    r.get("label_source", source);
    if (source == "gt") {
      c.train.label_source = LabelSource::kGroundTruth;
    } else if (source == "fpn") {
      c.train.label_source = LabelSource::kFpn;
    } else {
      throw ConfigError("[train] label_source: expected 'gt' or 'fpn', got '" + source + "'");
    }
    r.get("deterministic", c.train.deterministic);
    r.finish();
  }
  try {
    c.loss = losses::LossWeights::from_map(doc.section("loss"));
    c.generator = generator::GenConfig::from_map(doc.section("generator"));
    c.discriminator = discriminator::DiscConfig::from_map(doc.section("discriminator"));
    // The FPN resolution follows the training resolution unless stated.
    auto fpn_kv = doc.section("fpn");
    if (!fpn_kv.contains("in_resolution")) fpn_kv["in_resolution"] = std::to_string(c.train.resolution);
    c.fpn = parsing::FpnConfig::from_map(fpn_kv);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  {
    KeyReader r(doc.section("extractor"), "extractor");
    r.get("kind", c.extractor.kind);
    r.get("channels", c.extractor.channels);
    r.get("seed", c.extractor.seed);
    r.get("weights", c.extractor.weights);
    r.finish();
  }
  {
    KeyReader r(doc.section("data"), "data");
    r.get("hq_dir", c.data.hq_dir);
    r.get("label_dir", c.data.label_dir);
    r.get("synthetic_count", c.data.synthetic_count);
    r.get("synthetic_classes", c.data.synthetic_classes);
    r.get("synthetic_seed", c.data.synthetic_seed);
    r.finish();
  }
  {
    KeyReader r(doc.section("output"), "output");
    r.get("dir", c.output.dir);
    r.get("fpn_checkpoint", c.output.fpn_checkpoint);
    r.finish();
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  return from_ini(IniDocument::load(path));
}

void enable_deterministic_mode() {
  at::set_num_threads(1);
  at::globalContext().setDeterministicAlgorithms(true, /*warn_only=*/false);
}

}  // namespace psfr
