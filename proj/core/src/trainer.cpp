#include "abda/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "abda/synthdata.hpp"

namespace abda::trainer {

namespace ad = abda::ad;

// ---- config ----

namespace {

template <typename T>
T parse_num(const std::string& v, const std::string& key);

template <>
double parse_num<double>(const std::string& v, const std::string& key) {
  try {
    std::size_t pos;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (...) {
    throw std::invalid_argument("config: bad number for " + key + ": " + v);
  }
}

template <>
int parse_num<int>(const std::string& v, const std::string& key) {
  try {
    std::size_t pos;
    int d = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (...) {
    throw std::invalid_argument("config: bad integer for " + key + ": " + v);
  }
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: bad bool for " + key + ": " + v);
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "lambda1") lambda1 = parse_num<double>(value, key);
  else if (key == "lambda2") lambda2 = parse_num<double>(value, key);
  else if (key == "lambda3") lambda3 = parse_num<double>(value, key);
  else if (key == "lambda4") lambda4 = parse_num<double>(value, key);
  else if (key == "lambda5") lambda5 = parse_num<double>(value, key);
  else if (key == "lambda6") lambda6 = parse_num<double>(value, key);
  else if (key == "lambda7") lambda7 = parse_num<double>(value, key);
  else if (key == "tau") tau = parse_num<double>(value, key);
  else if (key == "motion_classes") motion_classes = parse_num<int>(value, key);
  else if (key == "sample_count") sample_count = parse_num<int>(value, key);
  else if (key == "contrast") contrast = parse_num<double>(value, key);
  else if (key == "p0") p0 = parse_num<double>(value, key);
  else if (key == "lr") lr = parse_num<double>(value, key);
  else if (key == "epochs_stage1") epochs_stage1 = parse_num<int>(value, key);
  else if (key == "epochs_stage2") epochs_stage2 = parse_num<int>(value, key);
  else if (key == "epochs_stage3") epochs_stage3 = parse_num<int>(value, key);
  else if (key == "epochs_decomposer") epochs_decomposer = parse_num<int>(value, key);
  else if (key == "batch_size") batch_size = parse_num<int>(value, key);
  else if (key == "seed") seed = static_cast<std::uint64_t>(std::stoull(value));
  else if (key == "decomposer_frozen") decomposer_frozen = parse_bool(value, key);
  else if (key == "stage2_day_photometric") stage2_day_photometric = parse_bool(value, key);
  else if (key == "stage3_photometric") stage3_photometric = parse_bool(value, key);
  else throw std::invalid_argument("config: unknown key: " + key);
}

void TrainConfig::validate() const {
  for (double l : {lambda1, lambda2, lambda3, lambda4, lambda5, lambda6, lambda7})
    if (!(l >= 0.0)) throw std::invalid_argument("config: lambda weights must be >= 0");
  if (motion_classes < 2) throw std::invalid_argument("config: motion_classes >= 2");
  if (sample_count < 1) throw std::invalid_argument("config: sample_count >= 1");
  if (tau <= 0.0) throw std::invalid_argument("config: tau > 0");
  if (contrast <= 0.0) throw std::invalid_argument("config: contrast > 0");
  if (!(p0 > 0.0 && p0 < 1.0)) throw std::invalid_argument("config: p0 in (0,1)");
  if (epochs_stage1 < 0 || epochs_stage2 < 0 || epochs_stage3 < 0 ||
      epochs_decomposer < 0)
    throw std::invalid_argument("config: stage epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size >= 1");
  if (lr <= 0.0) throw std::invalid_argument("config: lr > 0");
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "lambda1 = " << lambda1 << "\n"
     << "lambda2 = " << lambda2 << "\n"
     << "lambda3 = " << lambda3 << "\n"
     << "lambda4 = " << lambda4 << "\n"
     << "lambda5 = " << lambda5 << "\n"
     << "lambda6 = " << lambda6 << "\n"
     << "lambda7 = " << lambda7 << "\n"
     << "tau = " << tau << "\n"
     << "motion_classes = " << motion_classes << "\n"
     << "sample_count = " << sample_count << "\n"
     << "contrast = " << contrast << "\n"
     << "p0 = " << p0 << "\n"
     << "lr = " << lr << "\n"
     << "epochs_stage1 = " << epochs_stage1 << "\n"
     << "epochs_stage2 = " << epochs_stage2 << "\n"
     << "epochs_stage3 = " << epochs_stage3 << "\n"
     << "epochs_decomposer = " << epochs_decomposer << "\n"
     << "batch_size = " << batch_size << "\n"
     << "seed = " << seed << "\n"
     << "decomposer_frozen = " << (decomposer_frozen ? "true" : "false") << "\n"
     << "stage2_day_photometric = " << (stage2_day_photometric ? "true" : "false") << "\n"
     << "stage3_photometric = " << (stage3_photometric ? "true" : "false") << "\n";
  return os.str();
}

TrainConfig TrainConfig::from_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key = value: " + line);
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

TrainConfig TrainConfig::from_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("config: cannot open: " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return from_text(ss.str());
}

// ---- models ----

Models::Models(const TrainConfig& cfg)
    : day_flow(1, cfg.seed * 1000 + 11),
      night_flow(1, cfg.seed * 1000 + 12),
      event_flow(1, cfg.seed * 1000 + 13),
      decomposer(1, cfg.seed * 1000 + 14),
      discriminator(1, cfg.seed * 1000 + 15),
      attention(cfg.motion_classes, cfg.seed * 1000 + 16) {}

ckpt::Checkpoint Models::to_checkpoint(int stage, const TrainConfig& cfg) const {
  ckpt::Checkpoint c;
  c.stage = stage;
  c.config_text = cfg.to_text();
  c.put("day_flow", day_flow.params());
  c.put("night_flow", night_flow.params());
  c.put("event_flow", event_flow.params());
  c.put("decomposer", decomposer.params());
  c.put("discriminator", discriminator.params());
  c.put("attention", attention.params());
  return c;
}

void Models::load(const ckpt::Checkpoint& c) {
  c.get("day_flow", day_flow.params());
  c.get("night_flow", night_flow.params());
  c.get("event_flow", event_flow.params());
  c.get("decomposer", decomposer.params());
  c.get("discriminator", discriminator.params());
  c.get("attention", attention.params());
}

// ---- total objective ----

double total_loss(const LossTerms& t, const TrainConfig& cfg, int stage) {
  struct Named {
    const char* name;
    double value;
    double weight;
    bool active;
  };
  bool s1 = stage == 0 || stage == 1 || (stage == 2 && cfg.stage2_day_photometric) ||
            (stage == 3 && cfg.stage3_photometric);
  bool s2 = stage == 0 || stage == 2;
  bool s3 = stage == 0 || stage == 3;
  Named terms[] = {
      {"pho", t.pho, 1.0, s1},
      {"adv", t.adv, cfg.lambda1, s2},
      {"kl_cost", t.kl_cost, cfg.lambda2, s2},
      {"intra", t.intra, cfg.lambda3, s2},
      {"inter", t.inter, cfg.lambda4, s2},
      {"cls", t.cls, cfg.lambda5, s3},
      {"contra", t.contra, cfg.lambda6, s3},
      {"self_flow", t.self_flow, cfg.lambda7, s3},
  };
  double sum = 0.0;
  for (const Named& n : terms) {
    if (std::isnan(n.value))
      throw std::runtime_error(std::string("total_loss: NaN term: ") + n.name);
    if (n.active) sum += n.weight * n.value;
  }
  return sum;
}

// ---- shared training machinery ----

namespace {

Tensor ones_mask(int H, int W) { return Tensor({1, H, W}, 1.0); }

void copy_params(const nn::ParamSet& from, nn::ParamSet& to) {
  const auto& src = from.items();
  auto& dst = to.items();
  if (src.size() != dst.size())
    throw std::logic_error("copy_params: mismatched parameter sets");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].first != dst[i].first)
      throw std::logic_error("copy_params: name mismatch");
    dst[i].second->val = src[i].second->val;
  }
}

// occlusion = forward-backward inconsistency OR out-of-frame warp target
Tensor occlusion_with_validity(const Tensor& fw, const Tensor& bw) {
  Tensor occ = flowcore::occlusion_mask(fw, bw);
  Tensor valid = ad::warp_validity(fw);
  for (std::size_t i = 0; i < occ.size(); ++i)
    if (valid[i] < 0.5) occ[i] = 1.0;
  return occ;
}

// bidirectional photometric step over one frame pair; returns the forward
// loss value
double photometric_step(const flowcore::FlowNet& net, nn::ParamSet& params,
                        nn::Adam& opt, const Tensor& frame_t,
                        const Tensor& frame_t1) {
  params.zero_grad();
  auto fw = net.forward(ad::constant(frame_t), ad::constant(frame_t1));
  auto bw = net.forward(ad::constant(frame_t1), ad::constant(frame_t));
  Tensor occ_fw = occlusion_with_validity(fw->val, bw->val);
  Tensor occ_bw = occlusion_with_validity(bw->val, fw->val);
  double value;
  try {
    auto loss_fw = flowcore::photometric_loss(frame_t, frame_t1, fw, occ_fw);
    auto loss_bw = flowcore::photometric_loss(frame_t1, frame_t, bw, occ_bw);
    auto loss = ad::add(loss_fw, loss_bw);
    value = loss_fw->val.item();
    ad::backward(loss);
  } catch (const DegenerateInputError&) {
    return 0.0;  // fully occluded estimate this step; skip
  }
  opt.step(params);
  return value;
}

std::pair<Tensor, Tensor> event_voxel_pair(const SceneSample& s) {
  double tm = 0.5 * (s.t0 + s.t1);
  return {boundary::event_voxel(s.events, s.t0, tm),
          boundary::event_voxel(s.events, tm, s.t1)};
}

double event_photometric_step(const flowcore::FlowNet& net,
                              nn::ParamSet& params, nn::Adam& opt,
                              const SceneSample& s) {
  auto [va, vb] = event_voxel_pair(s);
  params.zero_grad();
  auto fw = net.forward_events(ad::constant(va), ad::constant(vb));
  auto bw = net.forward_events(ad::constant(vb), ad::constant(va));
  Tensor occ_fw = occlusion_with_validity(fw->val, bw->val);
  Tensor occ_bw = occlusion_with_validity(bw->val, fw->val);
  double value;
  try {
    // supervise against the clean frames the events were triggered by
    auto loss_fw = flowcore::photometric_loss(s.frame_t.data, s.frame_t1.data,
                                              fw, occ_fw);
    auto loss_bw = flowcore::photometric_loss(s.frame_t1.data, s.frame_t.data,
                                              bw, occ_bw);
    auto loss = ad::add(loss_fw, loss_bw);
    value = loss_fw->val.item();
    ad::backward(loss);
  } catch (const DegenerateInputError&) {
    return 0.0;
  }
  opt.step(params);
  return value;
}

double holdout_epe_night(const Models& m, const std::vector<SceneSample>& samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (const SceneSample& s : samples) {
    FlowField f = infer_night(m, s);
    acc += eval::epe(f, s.gt_flow, ones_mask(s.gt_flow.height(), s.gt_flow.width()));
  }
  return acc / static_cast<double>(samples.size());
}

double holdout_epe_day(const Models& m, const std::vector<SceneSample>& samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (const SceneSample& s : samples) {
    FlowField f = infer_day(m, s);
    acc += eval::epe(f, s.gt_flow, ones_mask(s.gt_flow.height(), s.gt_flow.width()));
  }
  return acc / static_cast<double>(samples.size());
}

class EpochLog {
 public:
  explicit EpochLog(const std::optional<std::filesystem::path>& path) {
    if (path) {
      file_.open(*path);
      if (!file_) throw IoError("cannot open training log: " + path->string());
      file_ << "epoch,pho,adv,kl_cost,intra,inter,cls,contra,self_flow,total,"
               "holdout_epe\n";
    }
  }
  void row(int epoch, const LossTerms& t, double total, double epe) {
    if (!file_.is_open()) return;
    file_ << epoch << "," << t.pho << "," << t.adv << "," << t.kl_cost << ","
          << t.intra << "," << t.inter << "," << t.cls << "," << t.contra
          << "," << t.self_flow << "," << total << "," << epe << "\n";
    file_.flush();
  }

 private:
  std::ofstream file_;
};

// cost volumes of a frame pair through a flow net's image encoder
ad::Value pair_cost_volume(const flowcore::FlowNet& net, const Tensor& a,
                           const Tensor& b) {
  auto fa = net.encode_image(ad::constant(a));
  auto fb = net.encode_image(ad::constant(b));
  return flowcore::cost_volume(fa.normed, fb.normed, nullptr, flowcore::kRadius);
}

}  // namespace

FlowField infer_day(const Models& m, const SceneSample& s) {
  auto f = m.day_flow.forward(ad::constant(s.frame_t.data),
                              ad::constant(s.frame_t1.data));
  return FlowField(f->val);
}

FlowField infer_night(const Models& m, const SceneSample& s) {
  auto f = m.night_flow.forward(ad::constant(s.night_t.data),
                                ad::constant(s.night_t1.data));
  return FlowField(f->val);
}

FlowField infer_event(const Models& m, const SceneSample& s) {
  auto [va, vb] = event_voxel_pair(s);
  auto f = m.event_flow.forward_events(ad::constant(va), ad::constant(vb));
  return FlowField(f->val);
}

// ---- stage 1: day + event flow pre-training ----

ckpt::Checkpoint stage1(const std::vector<SceneSample>& train,
                        const TrainConfig& cfg, const StageOptions& opts) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("stage1: empty dataset");
  Models m(cfg);
  nn::Adam opt_day(cfg.lr), opt_event(cfg.lr);
  EpochLog log(opts.log_csv);
  for (int epoch = 0; epoch < cfg.epochs_stage1; ++epoch) {
    LossTerms terms;
    for (const SceneSample& s : train) {
      terms.pho += photometric_step(m.day_flow, m.day_flow.params(), opt_day,
                                    s.frame_t.data, s.frame_t1.data);
      terms.pho += event_photometric_step(m.event_flow, m.event_flow.params(),
                                          opt_event, s);
    }
    terms.pho /= static_cast<double>(2 * train.size());
    double epe_val = opts.holdout ? holdout_epe_day(m, *opts.holdout) : 0.0;
    log.row(epoch, terms, total_loss(terms, cfg, 1), epe_val);
  }
  // the night model starts from the day model; applying it to night frames
  // is the stage-1 baseline the adaptation stages must beat
  copy_params(m.day_flow.params(), m.night_flow.params());
  return m.to_checkpoint(1, cfg);
}

// ---- stage 2: appearance adaptation ----

ckpt::Checkpoint stage2(const std::vector<SceneSample>& train,
                        const ckpt::Checkpoint& prev, const TrainConfig& cfg,
                        const StageOptions& opts) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("stage2: empty dataset");
  if (prev.stage != 1)
    throw std::invalid_argument("stage2: requires a stage-1 checkpoint, got stage " +
                                std::to_string(prev.stage));
  Models m(cfg);
  m.load(prev);

  // pre-train the decomposer on this run's day/night pairs
  std::vector<std::pair<Image, Image>> pairs;
  for (const SceneSample& s : train) {
    pairs.emplace_back(s.frame_t, s.night_t);
    pairs.emplace_back(s.frame_t1, s.night_t1);
  }
  retinex::TrainOptions dopts;
  dopts.epochs = cfg.epochs_decomposer;
  dopts.lr = cfg.lr;
  dopts.seed = cfg.seed;
  m.decomposer.train(pairs, dopts);

  nn::Adam opt_night(cfg.lr), opt_disc(cfg.lr), opt_day(cfg.lr), opt_dec(cfg.lr);
  EpochLog log(opts.log_csv);
  for (int epoch = 0; epoch < cfg.epochs_stage2; ++epoch) {
    LossTerms terms;
    for (const SceneSample& s : train) {
      if (cfg.stage2_day_photometric)
        terms.pho += photometric_step(m.day_flow, m.day_flow.params(), opt_day,
                                      s.frame_t.data, s.frame_t1.data);

      retinex::Decomposition rd_t = m.decomposer.decompose(s.frame_t);
      retinex::Decomposition rd_t1 = m.decomposer.decompose(s.frame_t1);
      retinex::Decomposition rn_t = m.decomposer.decompose(s.night_t);
      retinex::Decomposition rn_t1 = m.decomposer.decompose(s.night_t1);

      // daytime branch is a constant target: knowledge flows day -> night
      Tensor cv_d = pair_cost_volume(m.day_flow, s.frame_t.data, s.frame_t1.data)->val;
      Tensor cv_d_r = pair_cost_volume(m.day_flow, rd_t.reflectance, rd_t1.reflectance)->val;

      if (cfg.lambda2 > 0.0 || cfg.lambda3 > 0.0 || cfg.lambda4 > 0.0) {
        m.night_flow.params().zero_grad();
        auto cv_n = pair_cost_volume(m.night_flow, s.night_t.data, s.night_t1.data);
        auto cv_n_r = pair_cost_volume(m.night_flow, rn_t.reflectance, rn_t1.reflectance);

        ad::Value night_loss = ad::constant(0.0);
        if (cfg.lambda2 > 0.0) {
          auto l_kl = appearance::kl_cost_loss(cv_n_r, ad::constant(cv_d_r));
          terms.kl_cost += l_kl->val.item();
          night_loss = ad::add(night_loss, ad::mul_scalar(l_kl, cfg.lambda2));
        }
        if (cfg.lambda3 > 0.0) {
          auto l_intra = appearance::intra_align_loss(
              ad::constant(cv_d), ad::constant(cv_d_r), cv_n, cv_n_r);
          terms.intra += l_intra->val.item();
          night_loss = ad::add(night_loss, ad::mul_scalar(l_intra, cfg.lambda3));
        }
        if (cfg.lambda4 > 0.0) {
          auto l_inter = appearance::inter_align_loss(
              ad::constant(cv_d), ad::constant(cv_d_r), cv_n, cv_n_r);
          terms.inter += l_inter->val.item();
          night_loss = ad::add(night_loss, ad::mul_scalar(l_inter, cfg.lambda4));
        }
        ad::backward(night_loss);
        opt_night.step(m.night_flow.params());
      }

      // adversarial: one discriminator step per sample pair; generator side
      // reaches the decomposer only when it is not frozen
      {
        m.discriminator.params().zero_grad();
        std::vector<ad::Value> rday = {ad::constant(rd_t.reflectance),
                                       ad::constant(rd_t1.reflectance)};
        std::vector<ad::Value> rnight = {ad::constant(rn_t.reflectance),
                                         ad::constant(rn_t1.reflectance)};
        auto adv = appearance::adversarial_losses(rday, rnight, m.discriminator);
        ad::backward(ad::neg(adv.discriminator));  // ascent on loss_D
        opt_disc.step(m.discriminator.params());
        terms.adv += adv.discriminator->val.item();
      }
      if (!cfg.decomposer_frozen) {
        m.decomposer.params().zero_grad();
        m.discriminator.params().set_requires_grad(false);
        auto hn_t = m.decomposer.forward(ad::constant(s.night_t.data));
        auto hn_t1 = m.decomposer.forward(ad::constant(s.night_t1.data));
        std::vector<ad::Value> rday = {ad::constant(rd_t.reflectance)};
        std::vector<ad::Value> rnight = {hn_t.reflectance, hn_t1.reflectance};
        auto adv = appearance::adversarial_losses(rday, rnight, m.discriminator);
        ad::backward(ad::mul_scalar(adv.generator, cfg.lambda1));
        m.discriminator.params().set_requires_grad(true);
        opt_dec.step(m.decomposer.params());
      }
    }
    double n = static_cast<double>(train.size());
    terms.pho /= n;
    terms.adv /= n;
    terms.kl_cost /= n;
    terms.intra /= n;
    terms.inter /= n;
    double epe_val = opts.holdout ? holdout_epe_night(m, *opts.holdout) : 0.0;
    log.row(epoch, terms, total_loss(terms, cfg, 2), epe_val);
  }
  return m.to_checkpoint(2, cfg);
}

// ---- stage 3: boundary adaptation ----

ckpt::Checkpoint stage3(const std::vector<SceneSample>& train,
                        const ckpt::Checkpoint& prev, const TrainConfig& cfg,
                        const StageOptions& opts) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("stage3: empty dataset");
  if (prev.stage != 2)
    throw std::invalid_argument("stage3: requires a stage-2 checkpoint, got stage " +
                                std::to_string(prev.stage));
  for (const SceneSample& s : train)
    if (s.events.events.empty() && s.events.height == 0)
      throw std::invalid_argument("stage3: dataset lacks event streams");

  Models m(cfg);
  m.load(prev);
  nn::Adam opt_night(cfg.lr), opt_attn(cfg.lr);
  Rng rng(cfg.seed * 7919 + 3);
  EpochLog log(opts.log_csv);
  for (int epoch = 0; epoch < cfg.epochs_stage3; ++epoch) {
    LossTerms terms;
    for (const SceneSample& s : train) {
      m.night_flow.params().zero_grad();
      m.attention.params().zero_grad();

      auto flow_n = m.night_flow.forward(ad::constant(s.night_t.data),
                                         ad::constant(s.night_t1.data));
      auto [va, vb] = event_voxel_pair(s);
      Tensor flow_ev = FlowField(m.event_flow
                                     .forward_events(ad::constant(va), ad::constant(vb))
                                     ->val)
                           .data;

      // spatiotemporal-gradient common space: events vs. image x estimated flow
      Tensor dl_ev = synthdata::accumulate_events(s.events, s.t0, s.t1);
      Tensor st_grad = boundary::image_st_gradient(s.night_t.data, flow_n->val);
      Tensor corr = boundary::correlation_map(dl_ev, st_grad);
      Tensor labels = boundary::class_labels(corr, cfg.motion_classes);

      auto attn = m.attention.forward(ad::constant(corr));
      ad::Value night_loss = ad::constant(0.0);
      if (cfg.lambda5 > 0.0) {
        auto l_cls = boundary::cls_loss(attn, labels);
        terms.cls += l_cls->val.item();
        night_loss = ad::add(night_loss, ad::mul_scalar(l_cls, cfg.lambda5));
      }

      // contrastive transfer at cost-volume scale
      if (cfg.lambda6 > 0.0) {
        auto cv_n = pair_cost_volume(m.night_flow, s.night_t.data, s.night_t1.data);
        auto fa = m.event_flow.encode_events(ad::constant(va));
        auto fb = m.event_flow.encode_events(ad::constant(vb));
        Tensor cv_ev =
            flowcore::cost_volume(fa.normed, fb.normed, nullptr, flowcore::kRadius)->val;
        Tensor a0_full({1, corr.dim(1), corr.dim(2)});
        for (std::size_t i = 0; i < a0_full.size(); ++i)
          a0_full[i] = attn->val[i];  // channel 0 is the leading block
        Tensor a0 = boundary::downsample_nearest(a0_full, flowcore::kStride);
        Tensor labels_q = boundary::downsample_nearest(labels, flowcore::kStride);
        int n_avail_normal = 0, n_avail_other = 0;
        for (std::size_t i = 0; i < labels_q.size(); ++i)
          (labels_q[i] == 0.0 ? n_avail_normal : n_avail_other)++;
        int n_use = std::min({cfg.sample_count, n_avail_normal, n_avail_other});
        if (n_use >= 1) {
          boundary::SampleSet set = boundary::sample_features(
              cv_n, ad::constant(cv_ev), a0, labels_q, n_use, cfg.tau, rng);
          auto l_contra = boundary::contrastive_loss(set);
          terms.contra += l_contra->val.item();
          night_loss = ad::add(night_loss, ad::mul_scalar(l_contra, cfg.lambda6));
        }
      }

      // masked flow consistency against the (frozen) event flow
      if (cfg.lambda7 > 0.0) {
        Tensor v = boundary::valid_mask(attn->val, cfg.p0);
        if (v.sum() > 0.0) {
          auto l_self = boundary::motion_consistency_loss(flow_n, flow_ev, v);
          terms.self_flow += l_self->val.item();
          night_loss = ad::add(night_loss, ad::mul_scalar(l_self, cfg.lambda7));
        }
      }

      if (cfg.stage3_photometric) {
        try {
          Tensor occ = Tensor({1, s.night_t.height(), s.night_t.width()});
          auto l_pho = flowcore::photometric_loss(s.night_t.data, s.night_t1.data,
                                                  flow_n, occ);
          terms.pho += l_pho->val.item();
          night_loss = ad::add(night_loss, l_pho);
        } catch (const DegenerateInputError&) {
        }
      }

      ad::backward(night_loss);
      opt_night.step(m.night_flow.params());
      opt_attn.step(m.attention.params());
    }
    double n = static_cast<double>(train.size());
    terms.pho /= n;
    terms.cls /= n;
    terms.contra /= n;
    terms.self_flow /= n;
    double epe_val = opts.holdout ? holdout_epe_night(m, *opts.holdout) : 0.0;
    log.row(epoch, terms, total_loss(terms, cfg, 3), epe_val);
  }
  return m.to_checkpoint(3, cfg);
}

// ---- evaluation ----

eval::EvalReport evaluate(const ckpt::Checkpoint& c, const TrainConfig& cfg,
                          const std::vector<SceneSample>& samples) {
  Models m(cfg);
  m.load(c);
  eval::EvalReport report;
  report.sample_count = static_cast<int>(samples.size());
  double bepe_sum = 0.0;
  int bepe_count = 0;
  for (const SceneSample& s : samples) {
    Tensor all = ones_mask(s.gt_flow.height(), s.gt_flow.width());
    FlowField fn = infer_night(m, s);
    FlowField fd = infer_day(m, s);
    FlowField fe = infer_event(m, s);
    report.mean_epe_event += eval::epe(fe, s.gt_flow, all);
    eval::SampleMetrics sm;
    sm.id = s.id;
    sm.epe_night = eval::epe(fn, s.gt_flow, all);
    sm.fl_all_night = eval::fl_all(fn, s.gt_flow, all);
    sm.epe_day = eval::epe(fd, s.gt_flow, all);
    report.mean_epe_night += sm.epe_night;
    report.fl_all_night += sm.fl_all_night;
    report.mean_epe_day += sm.epe_day;
    report.fl_all_day += eval::fl_all(fd, s.gt_flow, all);
    if (auto be = eval::boundary_epe(fn, s.gt_flow, all)) {
      bepe_sum += *be;
      ++bepe_count;
    }
    report.per_sample.push_back(std::move(sm));
  }
  if (!samples.empty()) {
    double n = static_cast<double>(samples.size());
    report.mean_epe_night /= n;
    report.fl_all_night /= n;
    report.mean_epe_day /= n;
    report.fl_all_day /= n;
    report.mean_epe_event /= n;
  }
  report.boundary_epe_night = bepe_count > 0 ? bepe_sum / bepe_count : 0.0;
  return report;
}

}  // namespace abda::trainer
