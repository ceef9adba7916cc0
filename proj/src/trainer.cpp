#include "rmtppad/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "rmtppad/errors.hpp"

namespace fs = std::filesystem;

namespace rmtppad {

ParamGroup param_group_of(const std::string& name, const torch::Tensor& p) {
  const auto ends_with = [&](const std::string& suffix) {
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with("bias")) return ParamGroup::biases;
  if (p.dim() <= 1 || ends_with("scale_weights.logits")) return ParamGroup::norms;
  return ParamGroup::weights;
}

LrSchedule::LrSchedule(const TrainConfig& cfg, int64_t steps_per_epoch, int64_t total_steps)
    : cfg_(cfg),
      warmup_steps_(static_cast<int64_t>(std::llround(cfg.warmup_epochs * static_cast<double>(steps_per_epoch)))),
      total_steps_(total_steps) {}

double LrSchedule::cosine_factor(int64_t step) const {
  if (total_steps_ <= 0) return 1.0;
  const double t = std::clamp(static_cast<double>(step) / static_cast<double>(total_steps_), 0.0, 1.0);
  return (1.0 - std::cos(std::numbers::pi * t)) / 2.0 * (cfg_.final_lr_ratio - 1.0) + 1.0;
}

double LrSchedule::lr(int64_t step, ParamGroup group) const {
  const double target = cfg_.lr * cosine_factor(step);
  if (step >= warmup_steps_) return target;
  const double a = static_cast<double>(step) / static_cast<double>(warmup_steps_);
  const double start = group == ParamGroup::biases ? cfg_.warmup_bias_lr : 0.0;
  return start + a * (target - start);
}

double LrSchedule::momentum(int64_t step) const {
  if (step >= warmup_steps_) return cfg_.momentum;
  const double a = static_cast<double>(step) / static_cast<double>(warmup_steps_);
  return cfg_.warmup_momentum + a * (cfg_.momentum - cfg_.warmup_momentum);
}

std::vector<std::pair<Task, torch::Tensor>> LossBreakdown::per_task() const {
  std::vector<std::pair<Task, torch::Tensor>> out;
  if (detection.defined()) out.emplace_back(Task::detection, denoising.defined() ? detection + denoising : detection);
  if (drivable.defined()) out.emplace_back(Task::drivable, drivable);
  if (lane.defined()) out.emplace_back(Task::lane, lane);
  return out;
}

int64_t DenoisingBatch::expected_size() const {
  int64_t m = 0, g = 0;
  for (const auto& grp : groups) {
    m = std::max(m, grp.gt_count);
    g = grp.groups;
  }
  return g * m;
}

DenoisingBatch make_denoising_batch(const std::vector<ImageTargets>& targets, int64_t groups,
                                    const DenoisingNoise& noise, int64_t num_classes, std::mt19937_64& rng) {
  DenoisingBatch dn;
  if (groups <= 0) return dn;
  bool any = false;
  for (const auto& t : targets) {
    dn.groups.push_back(build_denoising_group(t, groups, noise, num_classes, rng));
    any = any || t.size() > 0;
  }
  if (any) dn.queries = pack_denoising(dn.groups, groups, num_classes);
  return dn;
}

LossBreakdown compute_losses(RmtPpad& model, const Batch& batch, const TrainConfig& cfg, const DenoisingBatch* dn) {
  const DenoisingQueries* queries = dn != nullptr && dn->queries ? &*dn->queries : nullptr;
  auto out = model->forward(batch.images, queries);
  const auto& tasks = model->config().tasks;
  LossBreakdown l;
  std::vector<std::pair<std::string, torch::Tensor>> parts;
  if (out.detection) {
    const auto* enc = cfg.det_loss.encoder_loss ? &out.detection->encoder : nullptr;
    l.detection_parts = detection_loss(out.detection->main, batch.targets, cfg.loss, cfg.det_loss, enc);
    l.detection = l.detection_parts.total();
    parts.emplace_back("detection", l.detection);
    if (queries != nullptr && out.detection->denoising) {
      l.denoising = denoising_loss(*out.detection->denoising, *queries, dn->groups, batch.targets, cfg.loss,
                                   cfg.det_loss);
    } else {
      l.denoising = torch::zeros({}, l.detection.options());
    }
    parts.emplace_back("denoising", l.denoising);
  }
  if (out.segmentation) {
    auto seg = segmentation_losses(out.segmentation->drivable, batch.drivable, out.segmentation->lane, batch.lane,
                                   cfg.loss, cfg.seg_loss);
    if (tasks.drivable) {
      l.drivable = seg.drivable;
      parts.emplace_back("drivable", l.drivable);
    }
    if (tasks.lane) {
      l.lane = seg.lane;
      parts.emplace_back("lane", l.lane);
    }
  }
  l.total = total_loss(parts);
  return l;
}

namespace {

int64_t total_steps_for(const TrainConfig& t, int64_t steps_per_epoch) {
  if (t.max_steps > 0) return t.max_steps;
  return t.epochs * steps_per_epoch;
}

double item(const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; }

std::mt19937_64 step_rng(uint64_t seed, int64_t step) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(step),
                    static_cast<uint32_t>(static_cast<uint64_t>(step) >> 32), 0xd0u};
  return std::mt19937_64(seq);
}

}  // namespace

Trainer::Trainer(const RunConfig& cfg, std::vector<Sample> train_set)
    : cfg_(cfg),
      data_(std::move(train_set)),
      steps_per_epoch_(std::max<int64_t>(
          1, (static_cast<int64_t>(data_.size()) + cfg.train.batch_size - 1) / cfg.train.batch_size)),
      schedule_(cfg.train, steps_per_epoch_, total_steps_for(cfg.train, steps_per_epoch_)) {
  cfg_.validate();
  if (data_.empty()) throw InputError("training set is empty");
  torch::manual_seed(cfg_.train.seed);
  model_ = RmtPpad(cfg_.model);
  model_->train();

  std::array<std::vector<torch::Tensor>, 3> buckets;
  for (const auto& kv : model_->named_parameters()) {
    buckets[static_cast<int>(param_group_of(kv.key(), kv.value()))].push_back(kv.value());
  }
  const auto& t = cfg_.train;
  std::vector<torch::optim::OptimizerParamGroup> groups;
  for (int g = 0; g < 3; ++g) {
    if (buckets[g].empty()) continue;
    const double wd = g == static_cast<int>(ParamGroup::weights) ? t.weight_decay : 0.0;
    if (t.optimizer == "sgd") {
      groups.emplace_back(buckets[g],
                          std::make_unique<torch::optim::SGDOptions>(
                              torch::optim::SGDOptions(t.lr).momentum(t.momentum).weight_decay(wd)));
    } else {
      groups.emplace_back(buckets[g], std::make_unique<torch::optim::AdamWOptions>(
                                          torch::optim::AdamWOptions(t.lr).weight_decay(wd)));
    }
    group_kinds_.push_back(static_cast<ParamGroup>(g));
  }
  if (t.optimizer == "sgd") {
    optimizer_ = std::make_unique<torch::optim::SGD>(std::move(groups), torch::optim::SGDOptions(t.lr));
  } else {
    optimizer_ = std::make_unique<torch::optim::AdamW>(std::move(groups), torch::optim::AdamWOptions(t.lr));
  }
}

void Trainer::apply_schedule() {
  auto& groups = optimizer_->param_groups();
  const double m = schedule_.momentum(step_);
  for (size_t i = 0; i < groups.size(); ++i) {
    const double lr = schedule_.lr(step_, group_kinds_[i]);
    if (cfg_.train.optimizer == "sgd") {
      auto& o = static_cast<torch::optim::SGDOptions&>(groups[i].options());
      o.lr(lr);
      o.momentum(m);
    } else {
      auto& o = static_cast<torch::optim::AdamWOptions&>(groups[i].options());
      o.lr(lr);
      o.betas({m, 0.999});
    }
  }
}

Batch Trainer::batch_for_step(int64_t step) const {
  const auto n = static_cast<int64_t>(data_.size());
  const auto epoch = step / steps_per_epoch_;
  const auto pos = step % steps_per_epoch_;
  const auto order = epoch_order(n, cfg_.train.seed, epoch);
  std::vector<int64_t> idx;
  for (int64_t i = pos * cfg_.train.batch_size; i < std::min(n, (pos + 1) * cfg_.train.batch_size); ++i)
    idx.push_back(order[i]);
  return collate(data_, idx);
}

StepReport Trainer::step() {
  StepReport r;
  r.step = step_;
  r.epoch = step_ / steps_per_epoch_;
  auto batch = batch_for_step(step_);
  apply_schedule();
  r.lr = schedule_.lr(step_, ParamGroup::weights);

  DenoisingBatch dn;
  if (cfg_.model.tasks.detection && cfg_.train.dn_groups > 0) {
    auto rng = step_rng(cfg_.train.seed, step_);
    dn = make_denoising_batch(batch.targets, cfg_.train.dn_groups, cfg_.train.dn_noise, cfg_.model.det.num_classes,
                              rng);
    r.dn_expected = dn.expected_size();
    r.dn_queries = dn.queries ? dn.queries->size() : 0;
  }

  model_->train();
  auto losses = compute_losses(model_, batch, cfg_.train, &dn);
  if (record_gradients_) r.gradients = record_task_gradients(model_->shared_parameters(), losses.per_task(), step_);

  optimizer_->zero_grad();
  losses.total.backward();
  if (cfg_.train.grad_clip > 0) torch::nn::utils::clip_grad_norm_(model_->parameters(), cfg_.train.grad_clip);
  optimizer_->step();
  ++step_;

  r.total = item(losses.total);
  r.detection = item(losses.detection);
  r.denoising = item(losses.denoising);
  r.drivable = item(losses.drivable);
  r.lane = item(losses.lane);
  return r;
}

void Trainer::save_checkpoint(const std::string& path) const {
  torch::serialize::OutputArchive archive;
  for (const auto& kv : model_->named_parameters()) archive.write("param/" + kv.key(), kv.value().detach());
  for (const auto& kv : model_->named_buffers()) archive.write("buffer/" + kv.key(), kv.value(), true);
  archive.write("config", c10::IValue(cfg_.serialize()));
  archive.write("step", c10::IValue(step_));
  torch::serialize::OutputArchive opt;
  optimizer_->save(opt);
  archive.write("optimizer", opt);
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  archive.save_to(path);
}

namespace {

void restore_module(torch::nn::Module& module, torch::serialize::InputArchive& archive) {
  torch::NoGradGuard no_grad;
  for (auto& kv : module.named_parameters()) {
    torch::Tensor t;
    archive.read("param/" + kv.key(), t);
    if (t.sizes() != kv.value().sizes()) throw ShapeError("checkpoint shape mismatch for " + kv.key());
    kv.value().copy_(t);
  }
  for (auto& kv : module.named_buffers()) {
    torch::Tensor t;
    archive.read("buffer/" + kv.key(), t, true);
    kv.value().copy_(t);
  }
}

RunConfig read_config(torch::serialize::InputArchive& archive) {
  c10::IValue v;
  archive.read("config", v);
  return RunConfig::parse(v.toStringRef());
}

}  // namespace

void Trainer::load_checkpoint(const std::string& path) {
  torch::serialize::InputArchive archive;
  archive.load_from(path);
  const auto saved = read_config(archive);
  if (saved.model.encoder.channel_width != cfg_.model.encoder.channel_width ||
      saved.model.use_gca != cfg_.model.use_gca)
    throw ConfigError("checkpoint was written for a different model configuration");
  restore_module(*model_, archive);
  c10::IValue s;
  archive.read("step", s);
  step_ = s.toInt();
  torch::serialize::InputArchive opt;
  archive.read("optimizer", opt);
  optimizer_->load(opt);
}

RmtPpad load_model(const std::string& checkpoint, RunConfig* cfg_out) {
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(checkpoint);
  } catch (const c10::Error& e) {
    throw InputError("cannot load checkpoint " + checkpoint);
  }
  const auto cfg = read_config(archive);
  RmtPpad model(cfg.model);
  restore_module(*model, archive);
  model->eval();
  if (cfg_out != nullptr) *cfg_out = cfg;
  return model;
}

namespace {

double selection_score(const MetricsRecord& m, const TaskSet& t) {
  double sum = 0.0;
  int n = 0;
  if (t.detection) sum += m.map50, ++n;
  if (t.drivable) sum += m.miou, ++n;
  if (t.lane) sum += m.lane_iou, ++n;
  return n ? sum / n : 0.0;
}

}  // namespace

TrainResult train(const RunConfig& cfg, std::vector<Sample> train_set, const std::vector<Sample>& val_set,
                  std::ostream* progress) {
  const fs::path out_dir(cfg.output_dir);
  fs::create_directories(out_dir);
  Trainer trainer(cfg, std::move(train_set));
  TrainResult result;
  result.last_checkpoint = (out_dir / "last.ckpt").string();
  result.best_checkpoint = (out_dir / "best.ckpt").string();
  {
    std::ofstream cfg_file(out_dir / "config.txt");
    cfg_file << cfg.serialize();
  }

  std::ofstream log(out_dir / "train_log.csv");
  log << "epoch,steps,mean_total,mean_detection,mean_denoising,mean_drivable,mean_lane\n";
  std::ofstream metrics(out_dir / "metrics.jsonl");

  if (trainer.finished()) {
    trainer.save_checkpoint(result.last_checkpoint);
    trainer.save_checkpoint(result.best_checkpoint);
    return result;
  }

  double best = -1.0;
  EpochLog cur;
  while (!trainer.finished()) {
    const auto r = trainer.step();
    cur.epoch = r.epoch;
    ++cur.steps;
    cur.mean_total += r.total;
    cur.mean_detection += r.detection;
    cur.mean_denoising += r.denoising;
    cur.mean_drivable += r.drivable;
    cur.mean_lane += r.lane;
    if (progress != nullptr && cfg.train.log_every > 0 && r.step % cfg.train.log_every == 0) {
      *progress << "step " << r.step << " epoch " << r.epoch << " lr " << r.lr << " loss " << r.total << " (det "
                << r.detection << ", dn " << r.denoising << ", da " << r.drivable << ", ll " << r.lane << ")" << std::endl;
    }
    const bool epoch_end = trainer.step_index() % trainer.steps_per_epoch() == 0 || trainer.finished();
    if (!epoch_end) continue;

    const double k = static_cast<double>(cur.steps);
    cur.mean_total /= k;
    cur.mean_detection /= k;
    cur.mean_denoising /= k;
    cur.mean_drivable /= k;
    cur.mean_lane /= k;
    const int64_t epochs_done = cur.epoch + 1;
    const bool eval_due =
        trainer.finished() || (cfg.train.eval_every > 0 && epochs_done % cfg.train.eval_every == 0);
    if (eval_due && !val_set.empty()) {
      cur.validation = evaluate(trainer.model(), val_set, cfg.train.thresholds, 0);
      metrics << "{\"epoch\":" << cur.epoch << ",\"metrics\":" << cur.validation->to_json() << "}\n";
      metrics.flush();
      const double score = selection_score(*cur.validation, cfg.model.tasks);
      if (score > best) {
        best = score;
        trainer.save_checkpoint(result.best_checkpoint);
      }
      if (progress != nullptr) *progress << "epoch " << cur.epoch << " validation\n" << cur.validation->to_text() << std::flush;
    }
    log << cur.epoch << "," << cur.steps << "," << cur.mean_total << "," << cur.mean_detection << ","
        << cur.mean_denoising << "," << cur.mean_drivable << "," << cur.mean_lane << "\n";
    log.flush();
    result.log.push_back(cur);
    cur = EpochLog{};
  }
  trainer.save_checkpoint(result.last_checkpoint);
  if (best < 0) trainer.save_checkpoint(result.best_checkpoint);
  result.steps = trainer.step_index();
  return result;
}

}  // namespace rmtppad
