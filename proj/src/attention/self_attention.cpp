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

#include "ego3rt/attention/self_attention.hpp"

#include <algorithm>
#include <cmath>

#include "ego3rt/attention/mvaa.hpp"
#include "ego3rt/errors.hpp"
#include "ego3rt/numerics/ops.hpp"

namespace ego3rt::attention {

namespace {

void check_layout(const Tensor& x, const EyeLayout& layout, std::size_t channels,
                  const char* what) {
  if (x.rank() != 2 || x.extent(0) != layout.eyes() || x.extent(1) != channels) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(layout.eyes()) +
                         " x " + std::to_string(channels) + ", got " + shape_string(x.shape()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// PolarAttention
// ---------------------------------------------------------------------------

PolarAttention::PolarAttention(std::size_t channels, std::size_t heads)
    : query(channels, channels),
      key(channels, channels),
      value(channels, channels),
      output(channels, channels),
      channels_(channels),
      heads_(heads) {
  if (heads == 0 || channels % heads != 0) {
    throw ConfigError("polar attention: channels must divide evenly into heads");
  }
}

void PolarAttention::init(Rng& rng, double gain) {
  query.init(rng, gain);
  key.init(rng, gain);
  value.init(rng, gain);
  output.init(rng, gain);
}

Tensor PolarAttention::forward(const Tensor& x, const EyeLayout& layout, Cache* cache) const {
  check_layout(x, layout, channels_, "polar attention");
  const std::size_t R = layout.rings;
  const std::size_t S = layout.rays;
  const std::size_t d = channels_ / heads_;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(d));
  Tensor q = query.forward(x);
  Tensor k = key.forward(x);
  Tensor v = value.forward(x);
  Tensor probs(Shape{S, heads_, R, R});
  Tensor context(x.shape());
  std::vector<Real> scores(R);
  for (std::size_t j = 0; j < S; ++j) {
    for (std::size_t h = 0; h < heads_; ++h) {
      for (std::size_t a = 0; a < R; ++a) {
        const Real* qa = q.data() + (a * S + j) * channels_ + h * d;
        for (std::size_t b = 0; b < R; ++b) {
          const Real* kb = k.data() + (b * S + j) * channels_ + h * d;
          Real dot = 0;
          for (std::size_t i = 0; i < d; ++i) dot += qa[i] * kb[i];
          scores[b] = dot * scale;
        }
        std::span<Real> p(probs.data() + ((j * heads_ + h) * R + a) * R, R);
        softmax_masked(scores, {}, p);
        Real* ca = context.data() + (a * S + j) * channels_ + h * d;
        for (std::size_t b = 0; b < R; ++b) {
          const Real* vb = v.data() + (b * S + j) * channels_ + h * d;
          for (std::size_t i = 0; i < d; ++i) ca[i] += p[b] * vb[i];
        }
      }
    }
  }
  Tensor out = output.forward(context);
  if (cache) {
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->context = std::move(context);
  }
  return out;
}

Tensor PolarAttention::backward(const Tensor& x, const EyeLayout& layout, const Cache& cache,
                                const Tensor& grad_out) {
  const std::size_t R = layout.rings;
  const std::size_t S = layout.rays;
  const std::size_t d = channels_ / heads_;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(d));
  const Tensor d_context = output.backward(cache.context, grad_out);
  Tensor dq(x.shape());
  Tensor dk(x.shape());
  Tensor dv(x.shape());
  std::vector<Real> dp(R);
  std::vector<Real> ds(R);
  for (std::size_t j = 0; j < S; ++j) {
    for (std::size_t h = 0; h < heads_; ++h) {
      for (std::size_t a = 0; a < R; ++a) {
        const std::size_t ra = (a * S + j) * channels_ + h * d;
        const Real* gca = d_context.data() + ra;
        std::span<const Real> p(cache.probs.data() + ((j * heads_ + h) * R + a) * R, R);
        for (std::size_t b = 0; b < R; ++b) {
          const std::size_t rb = (b * S + j) * channels_ + h * d;
          Real dot = 0;
          for (std::size_t i = 0; i < d; ++i) {
            dot += gca[i] * cache.v[rb + i];
            dv[rb + i] += p[b] * gca[i];
          }
          dp[b] = dot;
        }
        softmax_backward(p, dp, ds);
        for (std::size_t b = 0; b < R; ++b) {
          const std::size_t rb = (b * S + j) * channels_ + h * d;
          const Real g = ds[b] * scale;
          for (std::size_t i = 0; i < d; ++i) {
            dq[ra + i] += g * cache.k[rb + i];
            dk[rb + i] += g * cache.q[ra + i];
          }
        }
      }
    }
  }
  Tensor dx = query.backward(x, dq);
  const Tensor dxk = key.backward(x, dk);
  const Tensor dxv = value.backward(x, dv);
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dxk[i] + dxv[i];
  return dx;
}

void PolarAttention::visit(const std::string& prefix, const ParamVisitor& fn) {
  query.visit(prefix + ".query", fn);
  key.visit(prefix + ".key", fn);
  value.visit(prefix + ".value", fn);
  output.visit(prefix + ".output", fn);
}

// ---------------------------------------------------------------------------
// DeformableSelfAttention
// ---------------------------------------------------------------------------

DeformableSelfAttention::DeformableSelfAttention(std::size_t channels, std::size_t heads,
                                                 std::size_t points)
    : value(channels, channels),
      offsets(channels, heads * points * 2),
      weights(channels, heads * points),
      output(channels, channels),
      channels_(channels),
      heads_(heads),
      points_(points) {
  if (heads == 0 || points == 0 || channels % heads != 0) {
    throw ConfigError("deformable self-attention: bad head/point counts");
  }
}

void DeformableSelfAttention::init(Rng& rng, double gain) {
  value.init(rng, gain);
  output.init(rng, gain);
  offsets.weight.value.fill(0);
  const Tensor spread = init_offset_bias(heads_, 1, 1, points_);
  std::copy(spread.values().begin(), spread.values().end(), offsets.bias.value.values().begin());
  weights.init(rng, 0.1 * gain);
}

namespace {

BilinearTaps dsa_taps(const EyeLayout& layout, std::size_t eye, Real d_ray, Real d_ring) {
  const Real ring = static_cast<Real>(eye / layout.rays);
  const Real ray = static_cast<Real>(eye % layout.rays);
  return bilinear_taps(ray + d_ray, ring + d_ring, layout.rings, layout.rays, AxisMode::kWrap,
                       AxisMode::kClamp);
}

}  // namespace

Tensor DeformableSelfAttention::forward(const Tensor& x, const EyeLayout& layout,
                                        Cache* cache) const {
  check_layout(x, layout, channels_, "deformable self-attention");
  const std::size_t n = layout.eyes();
  const std::size_t d = channels_ / heads_;
  const std::size_t hk = heads_ * points_;
  Tensor v = value.forward(x);
  Tensor off = offsets.forward(x);
  Tensor logits = weights.forward(x);
  Tensor w(logits.shape());
  Tensor agg(x.shape());
  const MapView map{v.data(), layout.rings, layout.rays, channels_};
  std::vector<Real> sample(d);
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t h = 0; h < heads_; ++h) {
      std::span<Real> wh = w.row(q).subspan(h * points_, points_);
      softmax_masked(logits.row(q).subspan(h * points_, points_), {}, wh);
      for (std::size_t k = 0; k < points_; ++k) {
        const std::size_t s = h * points_ + k;
        const auto taps = dsa_taps(layout, q, off[q * hk * 2 + 2 * s], off[q * hk * 2 + 2 * s + 1]);
        gather_taps(map, taps, h * d, sample);
        Real* a = agg.data() + q * channels_ + h * d;
        for (std::size_t i = 0; i < d; ++i) a[i] += wh[k] * sample[i];
      }
    }
  }
  Tensor out = output.forward(agg);
  if (cache) {
    cache->values = std::move(v);
    cache->weights = std::move(w);
    cache->offsets = std::move(off);
    cache->aggregated = std::move(agg);
  }
  return out;
}

Tensor DeformableSelfAttention::backward(const Tensor& x, const EyeLayout& layout,
                                         const Cache& cache, const Tensor& grad_out) {
  const std::size_t n = layout.eyes();
  const std::size_t d = channels_ / heads_;
  const std::size_t hk = heads_ * points_;
  const Tensor d_agg = output.backward(cache.aggregated, grad_out);
  Tensor dv(cache.values.shape());
  Tensor d_off(cache.offsets.shape());
  Tensor d_logits(cache.weights.shape());
  const MapView map{cache.values.data(), layout.rings, layout.rays, channels_};
  std::vector<Real> sample(d);
  std::vector<Real> scaled(d);
  std::vector<Real> dw(points_);
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t h = 0; h < heads_; ++h) {
      const auto wh = cache.weights.row(q).subspan(h * points_, points_);
      const Real* ga = d_agg.data() + q * channels_ + h * d;
      for (std::size_t k = 0; k < points_; ++k) {
        const std::size_t s = h * points_ + k;
        const std::size_t o = q * hk * 2 + 2 * s;
        const auto taps = dsa_taps(layout, q, cache.offsets[o], cache.offsets[o + 1]);
        gather_taps(map, taps, h * d, sample);
        Real dot = 0;
        for (std::size_t i = 0; i < d; ++i) {
          dot += ga[i] * sample[i];
          scaled[i] = wh[k] * ga[i];
        }
        dw[k] = dot;
        scatter_taps(taps, scaled, channels_, h * d, dv.data());
        const auto dloc = taps_location_grad(map, taps, h * d, scaled);
        d_off[o] = dloc[0];
        d_off[o + 1] = dloc[1];
      }
      softmax_backward(wh, dw, d_logits.row(q).subspan(h * points_, points_));
    }
  }
  Tensor dx = value.backward(x, dv);
  const Tensor dx_off = offsets.backward(x, d_off);
  const Tensor dx_w = weights.backward(x, d_logits);
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dx_off[i] + dx_w[i];
  return dx;
}

void DeformableSelfAttention::visit(const std::string& prefix, const ParamVisitor& fn) {
  value.visit(prefix + ".value", fn);
  offsets.visit(prefix + ".offsets", fn);
  weights.visit(prefix + ".weights", fn);
  output.visit(prefix + ".output", fn);
}

// ---------------------------------------------------------------------------
// FfnDwConv
// ---------------------------------------------------------------------------

FfnDwConv::FfnDwConv(std::size_t channels, std::size_t hidden)
    : expand(channels, hidden),
      dwconv(hidden, 3, /*wrap_columns=*/true),
      contract(hidden, channels),
      channels_(channels),
      hidden_(hidden) {}

void FfnDwConv::init(Rng& rng, double gain) {
  expand.init(rng, gain);
  dwconv.set_identity();
  contract.init(rng, gain);
}

Tensor FfnDwConv::forward(const Tensor& x, const EyeLayout& layout, Cache* cache) const {
  check_layout(x, layout, channels_, "ffn");
  Tensor e = expand.forward(x).reshaped(Shape{layout.rings, layout.rays, hidden_});
  Tensor c = dwconv.forward(e);
  Tensor a = gelu(c);
  Tensor out = contract.forward(a.reshaped(Shape{layout.eyes(), hidden_}));
  if (cache) {
    cache->expanded = std::move(e);
    cache->conv = std::move(c);
    cache->activated = std::move(a);
  }
  return out;
}

Tensor FfnDwConv::backward(const Tensor& x, const EyeLayout& layout, const Cache& cache,
                           const Tensor& grad_out) {
  const Shape flat{layout.eyes(), hidden_};
  const Tensor da =
      contract.backward(cache.activated.reshaped(flat), grad_out)
          .reshaped(Shape{layout.rings, layout.rays, hidden_});
  const Tensor dc = gelu_backward(cache.conv, da);
  const Tensor de = dwconv.backward(cache.expanded, dc);
  return expand.backward(x, de.reshaped(flat));
}

void FfnDwConv::visit(const std::string& prefix, const ParamVisitor& fn) {
  expand.visit(prefix + ".expand", fn);
  dwconv.visit(prefix + ".dwconv", fn);
  contract.visit(prefix + ".contract", fn);
}

}  // namespace ego3rt::attention
