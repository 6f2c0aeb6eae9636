// src/gru.cc

// Copyright 2026  mcbeam authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLENESS OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "mcbeam/gru.h"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace mcbeam {

namespace {

Mat sigmoid(const Mat &x) {
  return 1.0 / (1.0 + (-x.array()).exp());
}

// Row-major fill in a fixed order so the rng stream pins every entry.
Mat init_mat(int rows, int cols, double limit, Rng *rng) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      m(i, j) = (2.0 * rng->uniform() - 1.0) * limit;
  return m;
}

Vec init_vec(int n, double limit, Rng *rng) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = (2.0 * rng->uniform() - 1.0) * limit;
  return v;
}

void check_finite_mat(const Mat &m, const char *who) {
  if (!m.allFinite()) throw NumericError(std::string(who) + ": non-finite parameter");
}

// One batched cell step; optionally exports the gate activations.
Mat cell_step(const GruLayerParams &p, const Mat &x, const Mat &h_prev,
              Mat *z_out = nullptr, Mat *r_out = nullptr, Mat *hc_out = nullptr) {
  Mat z = sigmoid((p.Wz * x + p.Uz * h_prev).colwise() + p.bz);
  Mat r = sigmoid((p.Wr * x + p.Ur * h_prev).colwise() + p.br);
  Mat hc = ((p.Wh * x + p.Uh * (r.array() * h_prev.array()).matrix()).colwise() + p.bh)
               .array()
               .tanh();
  Mat h = ((1.0 - z.array()) * h_prev.array() + z.array() * hc.array()).matrix();
  if (z_out) *z_out = std::move(z);
  if (r_out) *r_out = std::move(r);
  if (hc_out) *hc_out = std::move(hc);
  return h;
}

}  // namespace

std::vector<int> GruNetParams::hidden_sizes() const {
  std::vector<int> out;
  out.reserve(layers.size());
  for (const GruLayerParams &l : layers) out.push_back(l.hidden_size());
  return out;
}

void GruNetParams::validate() const {
  if (layers.empty()) throw ConfigError("GruNetParams: no layers");
  for (size_t l = 0; l < layers.size(); ++l) {
    const GruLayerParams &p = layers[l];
    int ni = p.input_size();
    int nh = p.hidden_size();
    if (ni <= 0 || nh <= 0) throw ConfigError("GruNetParams: empty layer");
    if (l > 0 && ni != layers[l - 1].hidden_size())
      throw DimensionError("GruNetParams: layer input does not match previous hidden");
    auto want = [&](const Mat &m, int r, int c, const char *name) {
      if (m.rows() != r || m.cols() != c)
        throw DimensionError(std::string("GruNetParams: bad shape for ") + name);
      check_finite_mat(m, "GruNetParams");
    };
    want(p.Wz, nh, ni, "Wz");
    want(p.Wr, nh, ni, "Wr");
    want(p.Wh, nh, ni, "Wh");
    want(p.Uz, nh, nh, "Uz");
    want(p.Ur, nh, nh, "Ur");
    want(p.Uh, nh, nh, "Uh");
    if (p.bz.size() != nh || p.br.size() != nh || p.bh.size() != nh)
      throw DimensionError("GruNetParams: bad bias size");
    if (!p.bz.allFinite() || !p.br.allFinite() || !p.bh.allFinite())
      throw NumericError("GruNetParams: non-finite bias");
  }
  if (Wo.cols() != layers.back().hidden_size() || Wo.rows() <= 0)
    throw DimensionError("GruNetParams: bad head shape");
  if (bo.size() != Wo.rows()) throw DimensionError("GruNetParams: bad head bias");
  check_finite_mat(Wo, "GruNetParams");
  if (!bo.allFinite()) throw NumericError("GruNetParams: non-finite head bias");
}

GruNetParams make_gru_net(int input_size, const std::vector<int> &hidden_sizes,
                          int output_size, Rng *rng) {
  if (input_size <= 0 || output_size <= 0 || hidden_sizes.empty())
    throw ConfigError("make_gru_net: sizes must be positive");
  GruNetParams net;
  int ni = input_size;
  for (int nh : hidden_sizes) {
    if (nh <= 0) throw ConfigError("make_gru_net: sizes must be positive");
    double wlim = 1.0 / std::sqrt(static_cast<double>(ni));
    double ulim = 1.0 / std::sqrt(static_cast<double>(nh));
    GruLayerParams p;
    Mat *Ws[3] = {&p.Wz, &p.Wr, &p.Wh};
    Mat *Us[3] = {&p.Uz, &p.Ur, &p.Uh};
    Vec *bs[3] = {&p.bz, &p.br, &p.bh};
    for (int g = 0; g < 3; ++g) {
      *Ws[g] = init_mat(nh, ni, wlim, rng);
      *Us[g] = init_mat(nh, nh, ulim, rng);
      *bs[g] = init_vec(nh, wlim, rng);
    }
    net.layers.push_back(std::move(p));
    ni = nh;
  }
  double olim = 1.0 / std::sqrt(static_cast<double>(ni));
  net.Wo = init_mat(output_size, ni, olim, rng);
  net.bo = init_vec(output_size, olim, rng);
  net.validate();
  return net;
}

Vec gru_cell_step(const GruLayerParams &layer, const Vec &x, const Vec &h_prev) {
  if (x.size() != layer.input_size() || h_prev.size() != layer.hidden_size())
    throw DimensionError("gru_cell_step: size mismatch");
  return cell_step(layer, x, h_prev);
}

GruState make_gru_state(const GruNetParams &params, int batch) {
  if (batch <= 0) throw ConfigError("make_gru_state: batch must be positive");
  GruState s;
  for (const GruLayerParams &l : params.layers)
    s.h.push_back(Mat::Zero(l.hidden_size(), batch));
  return s;
}

Mat gru_net_step(const GruNetParams &params, const Mat &x, GruState *state) {
  if (state->h.size() != params.layers.size())
    throw DimensionError("gru_net_step: state/net layer mismatch");
  if (x.rows() != params.input_size())
    throw DimensionError("gru_net_step: input size mismatch");
  Mat inp = x;
  for (size_t l = 0; l < params.layers.size(); ++l) {
    if (state->h[l].cols() != x.cols())
      throw DimensionError("gru_net_step: state batch mismatch");
    state->h[l] = cell_step(params.layers[l], inp, state->h[l]);
    inp = state->h[l];
  }
  return (params.Wo * inp).colwise() + params.bo;
}

std::vector<Mat> gru_net_forward(const GruNetParams &params,
                                 const std::vector<Mat> &inputs,
                                 GruForwardCache *cache) {
  const size_t L = params.layers.size();
  const int T = static_cast<int>(inputs.size());
  if (T == 0) return {};
  const int B = static_cast<int>(inputs[0].cols());
  if (inputs[0].rows() != params.input_size())
    throw DimensionError("gru_net_forward: input size mismatch");

  if (cache) {
    cache->z.assign(L, std::vector<Mat>(T));
    cache->r.assign(L, std::vector<Mat>(T));
    cache->hc.assign(L, std::vector<Mat>(T));
    cache->h.assign(L, std::vector<Mat>(T));
  }
  std::vector<Mat> h;
  for (const GruLayerParams &l : params.layers)
    h.push_back(Mat::Zero(l.hidden_size(), B));

  std::vector<Mat> outputs(T);
  for (int t = 0; t < T; ++t) {
    if (inputs[t].rows() != params.input_size() || inputs[t].cols() != B)
      throw DimensionError("gru_net_forward: ragged input sequence");
    const Mat *inp = &inputs[t];
    for (size_t l = 0; l < L; ++l) {
      Mat z, r, hc;
      h[l] = cell_step(params.layers[l], *inp, h[l], &z, &r, &hc);
      if (cache) {
        cache->z[l][t] = std::move(z);
        cache->r[l][t] = std::move(r);
        cache->hc[l][t] = std::move(hc);
        cache->h[l][t] = h[l];
      }
      inp = &h[l];
    }
    outputs[t] = (params.Wo * (*inp)).colwise() + params.bo;
  }
  return outputs;
}

GruGradients zero_gradients(const GruNetParams &params) {
  GruGradients g;
  for (const GruLayerParams &l : params.layers) {
    GruLayerParams z;
    z.Wz = Mat::Zero(l.Wz.rows(), l.Wz.cols());
    z.Wr = Mat::Zero(l.Wr.rows(), l.Wr.cols());
    z.Wh = Mat::Zero(l.Wh.rows(), l.Wh.cols());
    z.Uz = Mat::Zero(l.Uz.rows(), l.Uz.cols());
    z.Ur = Mat::Zero(l.Ur.rows(), l.Ur.cols());
    z.Uh = Mat::Zero(l.Uh.rows(), l.Uh.cols());
    z.bz = Vec::Zero(l.bz.size());
    z.br = Vec::Zero(l.br.size());
    z.bh = Vec::Zero(l.bh.size());
    g.layers.push_back(std::move(z));
  }
  g.Wo = Mat::Zero(params.Wo.rows(), params.Wo.cols());
  g.bo = Vec::Zero(params.bo.size());
  return g;
}

void gru_net_backward(const GruNetParams &params, const std::vector<Mat> &inputs,
                      const GruForwardCache &cache,
                      const std::vector<Mat> &grad_outputs, GruGradients *grads,
                      std::vector<Mat> *grad_inputs) {
  const int L = static_cast<int>(params.layers.size());
  const int T = static_cast<int>(inputs.size());
  if (static_cast<int>(grad_outputs.size()) != T)
    throw DimensionError("gru_net_backward: grad/input length mismatch");
  if (cache.h.size() != static_cast<size_t>(L) ||
      (T > 0 && static_cast<int>(cache.h[0].size()) != T))
    throw DimensionError("gru_net_backward: cache shape mismatch");
  if (T == 0) return;
  const int B = static_cast<int>(inputs[0].cols());

  // Gradient flowing into h_l(t) from the layer above (or the head).
  std::vector<std::vector<Mat>> dtop(L, std::vector<Mat>(T));
  for (int t = 0; t < T; ++t) {
    grads->Wo.noalias() += grad_outputs[t] * cache.h[L - 1][t].transpose();
    grads->bo += grad_outputs[t].rowwise().sum();
    dtop[L - 1][t] = params.Wo.transpose() * grad_outputs[t];
  }
  if (grad_inputs) grad_inputs->assign(T, Mat());

  for (int l = L - 1; l >= 0; --l) {
    const GruLayerParams &p = params.layers[l];
    GruLayerParams &g = grads->layers[l];
    Mat dcarry = Mat::Zero(p.hidden_size(), B);
    for (int t = T - 1; t >= 0; --t) {
      const Mat &x = (l == 0) ? inputs[t] : cache.h[l - 1][t];
      Mat h_prev = (t == 0) ? Mat(Mat::Zero(p.hidden_size(), B)) : cache.h[l][t - 1];
      const Mat &z = cache.z[l][t];
      const Mat &r = cache.r[l][t];
      const Mat &hc = cache.hc[l][t];

      Mat dh = dtop[l][t] + dcarry;
      Mat dz_pre =
          (dh.array() * (hc.array() - h_prev.array()) * z.array() * (1.0 - z.array()))
              .matrix();
      Mat dhc_pre = (dh.array() * z.array() * (1.0 - hc.array().square())).matrix();
      Mat a = p.Uh.transpose() * dhc_pre;  // grad wrt r . h_prev
      Mat dr_pre = (a.array() * h_prev.array() * r.array() * (1.0 - r.array())).matrix();

      dcarry = (dh.array() * (1.0 - z.array()) + a.array() * r.array()).matrix();
      dcarry.noalias() += p.Uz.transpose() * dz_pre;
      dcarry.noalias() += p.Ur.transpose() * dr_pre;

      g.Wz.noalias() += dz_pre * x.transpose();
      g.Wr.noalias() += dr_pre * x.transpose();
      g.Wh.noalias() += dhc_pre * x.transpose();
      g.Uz.noalias() += dz_pre * h_prev.transpose();
      g.Ur.noalias() += dr_pre * h_prev.transpose();
      g.Uh.noalias() += dhc_pre * (r.array() * h_prev.array()).matrix().transpose();
      g.bz += dz_pre.rowwise().sum();
      g.br += dr_pre.rowwise().sum();
      g.bh += dhc_pre.rowwise().sum();

      Mat dx = p.Wz.transpose() * dz_pre;
      dx.noalias() += p.Wr.transpose() * dr_pre;
      dx.noalias() += p.Wh.transpose() * dhc_pre;
      if (l > 0) {
        dtop[l - 1][t] = std::move(dx);
      } else if (grad_inputs) {
        (*grad_inputs)[t] = std::move(dx);
      }
    }
  }
}

GruTrainResult train_gru_supervised(const GruNetParams &initial,
                                    const std::vector<Mat> &inputs,
                                    const std::vector<Mat> &targets,
                                    const GruTrainConfig &cfg) {
  initial.validate();
  const int T = static_cast<int>(inputs.size());
  if (static_cast<int>(targets.size()) != T)
    throw DimensionError("train_gru_supervised: input/target length mismatch");
  if (T == 0) throw ConfigError("train_gru_supervised: empty dataset");
  const int B = static_cast<int>(inputs[0].cols());
  for (int t = 0; t < T; ++t)
    if (targets[t].rows() != initial.output_size() || targets[t].cols() != B)
      throw DimensionError("train_gru_supervised: bad target shape");
  if (cfg.warmup_frames < 0 || cfg.warmup_frames >= T)
    throw ConfigError("train_gru_supervised: warmup must lie in [0, frames)");
  if (cfg.steps <= 0) throw ConfigError("train_gru_supervised: steps must be positive");

  std::ofstream log;
  if (!cfg.log_path.empty()) {
    log.open(cfg.log_path);
    if (!log) throw IoError("train_gru_supervised: cannot open " + cfg.log_path);
    log << "step,loss\n";
  }

  GruTrainResult res;
  res.params = initial;
  GruGradients vel = zero_gradients(initial);
  const double count = static_cast<double>(B) * (T - cfg.warmup_frames);

  for (int step = 0; step < cfg.steps; ++step) {
    GruForwardCache cache;
    std::vector<Mat> outputs = gru_net_forward(res.params, inputs, &cache);

    double loss = 0.0;
    std::vector<Mat> grad_outputs(T);
    for (int t = 0; t < T; ++t) {
      if (t < cfg.warmup_frames) {
        grad_outputs[t] = Mat::Zero(outputs[t].rows(), B);
        continue;
      }
      Mat err = outputs[t] - targets[t];
      loss += err.squaredNorm();
      grad_outputs[t] = (2.0 / count) * err;
    }
    loss /= count;
    if (!std::isfinite(loss))
      throw NumericError("train_gru_supervised: loss diverged at step " +
                         std::to_string(step));
    res.loss_history.push_back(loss);
    if (log) log << step << ',' << loss << '\n';

    GruGradients grads = zero_gradients(res.params);
    gru_net_backward(res.params, inputs, cache, grad_outputs, &grads);

    for (size_t l = 0; l < res.params.layers.size(); ++l) {
      GruLayerParams &p = res.params.layers[l];
      GruLayerParams &v = vel.layers[l];
      GruLayerParams &g = grads.layers[l];
      auto upd_m = [&](Mat &pm, Mat &vm, const Mat &gm) {
        vm = cfg.momentum * vm - cfg.learning_rate * gm;
        pm += vm;
      };
      auto upd_v = [&](Vec &pv, Vec &vv, const Vec &gv) {
        vv = cfg.momentum * vv - cfg.learning_rate * gv;
        pv += vv;
      };
      upd_m(p.Wz, v.Wz, g.Wz);
      upd_m(p.Wr, v.Wr, g.Wr);
      upd_m(p.Wh, v.Wh, g.Wh);
      upd_m(p.Uz, v.Uz, g.Uz);
      upd_m(p.Ur, v.Ur, g.Ur);
      upd_m(p.Uh, v.Uh, g.Uh);
      upd_v(p.bz, v.bz, g.bz);
      upd_v(p.br, v.br, g.br);
      upd_v(p.bh, v.bh, g.bh);
    }
    vel.Wo = cfg.momentum * vel.Wo - cfg.learning_rate * grads.Wo;
    res.params.Wo += vel.Wo;
    vel.bo = cfg.momentum * vel.bo - cfg.learning_rate * grads.bo;
    res.params.bo += vel.bo;
  }
  res.final_loss = res.loss_history.back();
  return res;
}

namespace {

constexpr char kMagic[4] = {'M', 'C', 'B', 'G'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream &os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char *>(b), 4);
}

uint32_t get_u32(std::istream &is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char *>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

void put_u64(std::ostream &os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char *>(b), 8);
}

uint64_t get_u64(std::istream &is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char *>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

// Payload doubles as little-endian bit patterns, checksummed with fnv1a64.
void put_doubles(std::ostream &os, const double *p, size_t n, uint64_t *hash) {
  for (size_t i = 0; i < n; ++i) {
    uint64_t bits;
    std::memcpy(&bits, &p[i], 8);
    unsigned char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(bits >> (8 * k));
    *hash = fnv1a64(b, 8, *hash);
    os.write(reinterpret_cast<const char *>(b), 8);
  }
}

void get_doubles(std::istream &is, double *p, size_t n, uint64_t *hash) {
  for (size_t i = 0; i < n; ++i) {
    unsigned char b[8];
    is.read(reinterpret_cast<char *>(b), 8);
    *hash = fnv1a64(b, 8, *hash);
    uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= static_cast<uint64_t>(b[k]) << (8 * k);
    std::memcpy(&p[i], &bits, 8);
  }
}

template <typename F>
void for_each_tensor(GruNetParams *p, F &&fn) {
  for (GruLayerParams &l : *&p->layers) {
    fn(l.Wz.data(), l.Wz.size());
    fn(l.Wr.data(), l.Wr.size());
    fn(l.Wh.data(), l.Wh.size());
    fn(l.Uz.data(), l.Uz.size());
    fn(l.Ur.data(), l.Ur.size());
    fn(l.Uh.data(), l.Uh.size());
    fn(l.bz.data(), l.bz.size());
    fn(l.br.data(), l.br.size());
    fn(l.bh.data(), l.bh.size());
  }
  fn(p->Wo.data(), p->Wo.size());
  fn(p->bo.data(), p->bo.size());
}

}  // namespace

void write_gru_params(const GruNetParams &params, const std::string &path) {
  params.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("write_gru_params: cannot open " + path);
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<uint32_t>(params.tag.size()));
  os.write(params.tag.data(), static_cast<std::streamsize>(params.tag.size()));
  put_u32(os, static_cast<uint32_t>(params.layers.size()));
  put_u64(os, static_cast<uint64_t>(params.input_size()));
  for (const GruLayerParams &l : params.layers)
    put_u64(os, static_cast<uint64_t>(l.hidden_size()));
  put_u64(os, static_cast<uint64_t>(params.output_size()));

  uint64_t hash = fnv1a64(nullptr, 0);
  GruNetParams copy = params;
  for_each_tensor(&copy, [&](double *data, Eigen::Index n) {
    put_doubles(os, data, static_cast<size_t>(n), &hash);
  });
  put_u64(os, hash);
  if (!os) throw IoError("write_gru_params: write failed for " + path);
}

GruNetParams read_gru_params(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("read_gru_params: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("read_gru_params: bad magic in " + path);
  if (get_u32(is) != kVersion) throw IoError("read_gru_params: unsupported version");
  uint32_t tag_len = get_u32(is);
  if (tag_len > 256) throw IoError("read_gru_params: corrupt tag length");
  std::string tag(tag_len, '\0');
  is.read(tag.data(), tag_len);
  uint32_t n_layers = get_u32(is);
  if (n_layers == 0 || n_layers > 64) throw IoError("read_gru_params: corrupt layer count");
  int64_t input = static_cast<int64_t>(get_u64(is));
  std::vector<int64_t> hidden(n_layers);
  for (uint32_t l = 0; l < n_layers; ++l) hidden[l] = static_cast<int64_t>(get_u64(is));
  int64_t output = static_cast<int64_t>(get_u64(is));
  if (!is || input <= 0 || output <= 0) throw IoError("read_gru_params: corrupt dims");

  GruNetParams p;
  p.tag = tag;
  int64_t ni = input;
  for (uint32_t l = 0; l < n_layers; ++l) {
    int64_t nh = hidden[l];
    if (nh <= 0) throw IoError("read_gru_params: corrupt dims");
    GruLayerParams lp;
    lp.Wz.resize(nh, ni);
    lp.Wr.resize(nh, ni);
    lp.Wh.resize(nh, ni);
    lp.Uz.resize(nh, nh);
    lp.Ur.resize(nh, nh);
    lp.Uh.resize(nh, nh);
    lp.bz.resize(nh);
    lp.br.resize(nh);
    lp.bh.resize(nh);
    p.layers.push_back(std::move(lp));
    ni = nh;
  }
  p.Wo.resize(output, ni);
  p.bo.resize(output);

  uint64_t hash = fnv1a64(nullptr, 0);
  for_each_tensor(&p, [&](double *data, Eigen::Index n) {
    get_doubles(is, data, static_cast<size_t>(n), &hash);
  });
  uint64_t stored = get_u64(is);
  if (!is) throw IoError("read_gru_params: truncated file " + path);
  if (stored != hash) throw IoError("read_gru_params: checksum mismatch in " + path);
  p.validate();
  return p;
}

}  // namespace mcbeam
