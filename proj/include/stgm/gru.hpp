// SPDX-License-Identifier: Apache-2.0
//
// Music encoder: per-piece affine map + layer norm, then stacked
// bi-directional GRU layers (h/2 units per direction, outputs concatenated).
//
// GRU cell, gate order (r, z, n):
//   r  = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
//   z  = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
//   n  = tanh(x W_in + b_in + r * (h W_hn + b_hn))
//   h' = (1 - z) * n + z * h
#pragma once

#include <string>
#include <vector>

#include "stgm/ops.hpp"
#include "stgm/tensor.hpp"

namespace stgm {

/// prefix.w_ih [in x 3H], prefix.w_hh [H x 3H], prefix.b_ih [3H], prefix.b_hh [3H].
void register_gru_direction(ParamStore& ps, const std::string& prefix, std::size_t input, std::size_t hidden,
                            Rng& rng);

struct GruDirectionCache {
  Tensor x;                // [F x in]
  Tensor h;                // [F x H], state after each step
  Tensor r, z, n, hn_pre;  // [F x H]
  bool reverse = false;
};

/// Runs one direction over x [F x in]; `reverse` walks frames F-1 .. 0.
/// Output row t is the state after consuming frame t.
Tensor gru_direction(const Tensor& x, const ParamStore& ps, const std::string& prefix, bool reverse,
                     GruDirectionCache* cache = nullptr);
Tensor gru_direction_backward(const Tensor& dh, ParamStore& ps, const std::string& prefix,
                              const GruDirectionCache& cache);

/// Layers prefix.l<k>.fw / prefix.l<k>.bw, each with hidden = width / 2.
void register_bigru(ParamStore& ps, const std::string& prefix, std::size_t input, std::size_t width,
                    std::size_t layers, Rng& rng);

struct BiGruCache {
  std::vector<GruDirectionCache> fw, bw;
};

Tensor gru_bidirectional(const Tensor& x, const ParamStore& ps, const std::string& prefix, std::size_t layers,
                         BiGruCache* cache = nullptr);
Tensor gru_bidirectional_backward(const Tensor& dy, ParamStore& ps, const std::string& prefix,
                                  std::size_t layers, const BiGruCache& cache);

inline constexpr std::size_t kEncoderGruLayers = 2;

/// prefix.enc (w, b), prefix.enc_ln, prefix.gru. Width must be even.
void register_music_encoder(ParamStore& ps, const std::string& prefix, std::size_t input, std::size_t width,
                            Rng& rng);

struct MusicEncoderCache {
  Tensor features;
  Tensor projected;
  LayerNormCache ln;
  Tensor normed;
  BiGruCache gru;
};

/// features [F x d_in] -> H0 [F x width].
Tensor music_encoder(const Tensor& features, const ParamStore& ps, const std::string& prefix,
                     MusicEncoderCache* cache = nullptr);
/// Accumulates parameter gradients; returns d(features).
Tensor music_encoder_backward(const Tensor& dh0, ParamStore& ps, const std::string& prefix,
                              const MusicEncoderCache& cache);

}  // namespace stgm
