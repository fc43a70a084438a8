// Copyright 2026 The ego3rt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// End-to-end loop-nest reference for the back-tracing decoder: pyramid convs,
// homogeneous eye projection, and the four residual blocks of every layer,
// composed from the per-block oracles.

#include <cmath>
#include <vector>

#include "ego3rt/decoder/decoder.hpp"
#include "support/attention_oracles.hpp"
#include "support/geometry_oracles.hpp"

namespace ego3rt::testing {

inline double gelu_oracle(double x) { return 0.5 * x * (1 + std::erf(x / std::sqrt(2.0))); }

// Direct convolution with border-replicate padding.
inline Tensor replicate_conv_oracle(const Conv2d& conv, const Tensor& x) {
  const std::size_t H = x.extent(0), W = x.extent(1), I = conv.in_channels(), O = conv.out_channels();
  const std::size_t k = conv.kernel(), s = conv.stride();
  const long p = static_cast<long>(conv.padding());
  const std::size_t oh = (H + 2 * conv.padding() - k) / s + 1, ow = (W + 2 * conv.padding() - k) / s + 1;
  auto clampi = [](long i, std::size_t n) {
    return static_cast<std::size_t>(std::clamp(i, 0L, static_cast<long>(n) - 1));
  };
  Tensor y(Shape{oh, ow, O});
  for (std::size_t a = 0; a < oh; ++a)
    for (std::size_t b = 0; b < ow; ++b)
      for (std::size_t o = 0; o < O; ++o) {
        double acc = conv.bias.value[o];
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::size_t iy = clampi(static_cast<long>(a * s + ky) - p, H);
            const std::size_t ix = clampi(static_cast<long>(b * s + kx) - p, W);
            for (std::size_t i = 0; i < I; ++i)
              acc += conv.weight.value[((ky * k + kx) * I + i) * O + o] * x.at({iy, ix, i});
          }
        y.at({a, b, o}) = acc;
      }
  return y;
}

inline Tensor layer_norm_oracle(const LayerNorm& ln, const Tensor& x) {
  const std::size_t N = x.extent(0), C = x.extent(1);
  Tensor y(x.shape());
  for (std::size_t n = 0; n < N; ++n) {
    double mean = 0, var = 0;
    for (std::size_t c = 0; c < C; ++c) mean += x.at({n, c});
    mean /= static_cast<double>(C);
    for (std::size_t c = 0; c < C; ++c) var += (x.at({n, c}) - mean) * (x.at({n, c}) - mean);
    var /= static_cast<double>(C);
    for (std::size_t c = 0; c < C; ++c)
      y.at({n, c}) = (x.at({n, c}) - mean) / std::sqrt(var + 1e-5) * ln.gamma.value[c] + ln.beta.value[c];
  }
  return y;
}

inline Tensor ffn_oracle(const attention::FfnDwConv& ffn, const Tensor& x, const attention::EyeLayout& lay) {
  const std::size_t N = x.extent(0), C = x.extent(1), Hd = ffn.expand.out_features();
  const std::size_t R = lay.rings, S = lay.rays;
  Tensor e(Shape{N, Hd});
  for (std::size_t n = 0; n < N; ++n) {
    const auto v = affine_oracle(ffn.expand, x, n);
    for (std::size_t c = 0; c < Hd; ++c) e.at({n, c}) = v[c];
  }
  Tensor a(Shape{N, Hd});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t c = 0; c < Hd; ++c) {
        double acc = ffn.dwconv.bias.value[c];
        for (long dr = -1; dr <= 1; ++dr)
          for (long ds = -1; ds <= 1; ++ds) {
            const long rr = static_cast<long>(r) + dr;
            if (rr < 0 || rr >= static_cast<long>(R)) continue;
            const long ss = (static_cast<long>(s) + ds + static_cast<long>(S)) % static_cast<long>(S);
            acc += ffn.dwconv.weight.value[((dr + 1) * 3 + (ds + 1)) * Hd + c] *
                   e.at({static_cast<std::size_t>(rr) * S + static_cast<std::size_t>(ss), c});
          }
        a.at({r * S + s, c}) = gelu_oracle(acc);
      }
  Tensor out(Shape{N, C});
  for (std::size_t n = 0; n < N; ++n) {
    const auto v = affine_oracle(ffn.contract, a, n);
    for (std::size_t c = 0; c < C; ++c) out.at({n, c}) = v[c];
  }
  return out;
}

inline attention::FeaturePyramid pyramid_oracle(const decoder::ToyPyramid& pyr,
                                                const std::vector<Tensor>& images) {
  const std::size_t L = pyr.convs.size();
  attention::FeaturePyramid out(images.size(), L);
  for (std::size_t t = 0; t < images.size(); ++t) {
    Tensor in = images[t];
    for (std::size_t l = 0; l < L; ++l) {
      Tensor x = replicate_conv_oracle(pyr.convs[l], in);
      in = x;
      for (auto& v : in.values()) v = gelu_oracle(v);
      out.at(t, l) = std::move(x);
    }
  }
  return out;
}

inline attention::EyeProjections projection_oracle(const geometry::CameraRig& rig,
                                                   const std::vector<geometry::Vec3>& positions) {
  attention::EyeProjections p;
  p.eyes = positions.size();
  p.views = rig.view_count();
  for (const auto& r : positions)
    for (const auto& cam : rig.cameras) {
      const auto img = homogeneous_projection(cam, r);
      p.u.push_back(img[0]);
      p.v.push_back(img[1]);
      p.visible.push_back(img[2] > 0 && img[0] > 0 && img[0] < 1 && img[1] > 0 && img[1] < 1);
    }
  return p;
}

inline Tensor decoder_oracle(const decoder::BackTracingDecoder& dec,
                             const attention::FeaturePyramid& pyr, const geometry::CameraRig& rig) {
  const auto& grid = dec.grid();
  const std::size_t N = grid.eye_count(), C = dec.config().channels;
  const attention::EyeLayout lay{grid.radial_count, grid.ray_count};
  const auto proj = projection_oracle(rig, grid.positions);
  Tensor y(Shape{N, C});
  for (std::size_t q = 0; q < N; ++q)
    for (std::size_t c = 0; c < C; ++c) y.at({q, c}) = dec.eye_init.value[c];
  if (dec.config().positional_encoding) {
    for (std::size_t q = 0; q < N; ++q)
      for (std::size_t i = 0; i < C / 4; ++i) {
        const double w = std::pow(100.0, -static_cast<double>(i) / static_cast<double>(C / 4));
        y.at({q, 4 * i}) += std::sin(w * grid.positions[q][0]);
        y.at({q, 4 * i + 1}) += std::cos(w * grid.positions[q][0]);
        y.at({q, 4 * i + 2}) += std::sin(w * grid.positions[q][1]);
        y.at({q, 4 * i + 3}) += std::cos(w * grid.positions[q][1]);
      }
  }
  auto add = [](Tensor& a, const Tensor& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  };
  for (const auto& layer : dec.layers) {
    add(y, dsa_oracle(layer_norm_oracle(layer.norms[0], y), lay, layer.self_attention));
    add(y, polar_oracle(layer_norm_oracle(layer.norms[1], y), lay, layer.polar_attention));
    add(y, mvaa_oracle(layer_norm_oracle(layer.norms[2], y), pyr, proj, layer.cross_attention));
    add(y, ffn_oracle(layer.ffn, layer_norm_oracle(layer.norms[3], y), lay));
  }
  return y;
}

inline Tensor decoder_oracle(const decoder::BackTracingDecoder& dec, const decoder::SceneInput& scene) {
  return decoder_oracle(dec, pyramid_oracle(dec.pyramid, scene.images), scene.rig);
}

}  // namespace ego3rt::testing
