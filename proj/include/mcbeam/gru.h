// include/mcbeam/gru.h

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

#ifndef MCBEAM_GRU_H_
#define MCBEAM_GRU_H_

#include <string>
#include <vector>

#include "mcbeam/common.h"

namespace mcbeam {

// One GRU layer. Cell convention (fixed here, update gate selects the new
// content): z = sigmoid(Wz x + Uz h + bz), r = sigmoid(Wr x + Ur h + br),
// hc = tanh(Wh x + Uh (r . h) + bh), h' = (1 - z) . h + z . hc.
struct GruLayerParams {
  Mat Wz, Wr, Wh;  // hidden x input
  Mat Uz, Ur, Uh;  // hidden x hidden
  Vec bz, br, bh;  // hidden

  int input_size() const { return static_cast<int>(Wz.cols()); }
  int hidden_size() const { return static_cast<int>(Wz.rows()); }
};

// Stacked GRU layers plus a linear output head.
struct GruNetParams {
  std::string tag = "gru";
  std::vector<GruLayerParams> layers;
  Mat Wo;  // output x hidden(last)
  Vec bo;  // output

  int input_size() const { return layers.empty() ? 0 : layers[0].input_size(); }
  int output_size() const { return static_cast<int>(Wo.rows()); }
  std::vector<int> hidden_sizes() const;
  void validate() const;  // dimension chain consistent, all entries finite
};

// Seeded init, uniform +-1/sqrt(fan_in): W and the gate biases use the layer
// input size, U the hidden size, head weight and bias the last hidden size.
// Draw order is fixed (per layer: z, r, h gates, each W then U then b; head
// last) so a seed pins every parameter.
GruNetParams make_gru_net(int input_size, const std::vector<int> &hidden_sizes,
                          int output_size, Rng *rng);

// Single-vector cell step for one layer.
Vec gru_cell_step(const GruLayerParams &layer, const Vec &x, const Vec &h_prev);

// Batched hidden state, one column per independent sequence.
struct GruState {
  std::vector<Mat> h;  // [layer], hidden x batch
};

GruState make_gru_state(const GruNetParams &params, int batch);

// One time step for the whole net; x is input x batch, returns output x
// batch and advances the state in place.
Mat gru_net_step(const GruNetParams &params, const Mat &x, GruState *state);

// Forward activations kept for backpropagation through time.
struct GruForwardCache {
  // [layer][t], each hidden x batch.
  std::vector<std::vector<Mat>> z, r, hc, h;
};

// Full-sequence forward; inputs[t] is input x batch, result[t] is output x
// batch. A null cache skips activation storage.
std::vector<Mat> gru_net_forward(const GruNetParams &params,
                                 const std::vector<Mat> &inputs,
                                 GruForwardCache *cache = nullptr);

struct GruGradients {
  std::vector<GruLayerParams> layers;
  Mat Wo;
  Vec bo;
};

GruGradients zero_gradients(const GruNetParams &params);

// Accumulates parameter gradients for d(loss)/d(outputs[t]) = grad_outputs[t]
// into *grads; optionally also returns d(loss)/d(inputs[t]).
void gru_net_backward(const GruNetParams &params, const std::vector<Mat> &inputs,
                      const GruForwardCache &cache,
                      const std::vector<Mat> &grad_outputs, GruGradients *grads,
                      std::vector<Mat> *grad_inputs = nullptr);

struct GruTrainConfig {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  int steps = 2000;
  // Frames before this index are excluded from the loss (recurrent warmup).
  int warmup_frames = 0;
  // Nonempty: write a step,loss CSV there.
  std::string log_path;
};

struct GruTrainResult {
  GruNetParams params;
  std::vector<double> loss_history;  // one entry per step
  double final_loss = 0.0;
};

// Full-batch gradient descent with momentum on the mean over (sequence,
// counted frame) of the feature-summed squared error. Deterministic given
// the initial parameters. Non-finite loss aborts with diagnostics.
GruTrainResult train_gru_supervised(const GruNetParams &initial,
                                    const std::vector<Mat> &inputs,
                                    const std::vector<Mat> &targets,
                                    const GruTrainConfig &cfg);

// Binary weight file: magic, version, tag, layer dims, little-endian 64-bit
// floats, trailing checksum. Round-trips bit exactly.
void write_gru_params(const GruNetParams &params, const std::string &path);
GruNetParams read_gru_params(const std::string &path);

}  // namespace mcbeam

#endif  // MCBEAM_GRU_H_
