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

#include "ego3rt/attention/mvaa.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ego3rt/errors.hpp"
#include "ego3rt/numerics/ops.hpp"

namespace ego3rt::attention {

FeaturePyramid FeaturePyramid::zeros_like() const {
  FeaturePyramid out(views, scales);
  for (std::size_t i = 0; i < maps.size(); ++i) out.maps[i] = Tensor(maps[i].shape());
  return out;
}

void FeaturePyramid::validate() const {
  if (views == 0 || scales == 0 || maps.size() != views * scales) {
    throw ConfigError("feature pyramid: inconsistent view/scale counts");
  }
  for (std::size_t t = 0; t < views; ++t) {
    for (std::size_t l = 0; l < scales; ++l) {
      const Tensor& m = at(t, l);
      if (m.rank() != 3) throw ConfigError("feature pyramid: maps must be H x W x C");
      if (m.extent(2) != at(0, l).extent(2)) {
        throw ConfigError("feature pyramid: channel count differs across views");
      }
      if (l > 0) {
        const Tensor& prev = at(t, l - 1);
        if (!(m.extent(0) < prev.extent(0) && m.extent(1) < prev.extent(1))) {
          throw ConfigError("feature pyramid: extents must strictly decrease with scale");
        }
      }
    }
  }
}

bool EyeProjections::blind(std::size_t eye) const {
  for (std::size_t t = 0; t < views; ++t) {
    if (visible[eye * views + t]) return false;
  }
  return true;
}

EyeProjections project_eyes(const geometry::CameraRig& rig, std::span<const Vec3> positions) {
  EyeProjections p;
  p.eyes = positions.size();
  p.views = rig.view_count();
  p.u.assign(p.eyes * p.views, 0);
  p.v.assign(p.eyes * p.views, 0);
  p.visible.assign(p.eyes * p.views, 0);
  for (std::size_t q = 0; q < p.eyes; ++q) {
    for (std::size_t t = 0; t < p.views; ++t) {
      const auto ip = geometry::try_project(rig.cameras[t], positions[q]);
      if (!ip) continue;
      p.u[q * p.views + t] = ip->u;
      p.v[q * p.views + t] = ip->v;
      p.visible[q * p.views + t] = geometry::visible(*ip) ? 1 : 0;
    }
  }
  return p;
}

void MvaaShape::validate() const {
  if (channels == 0 || heads == 0 || scales == 0 || views == 0 || points == 0 ||
      value_channels == 0) {
    throw ConfigError("MVAA: all counts must be >= 1");
  }
  if (channels % heads != 0) throw ConfigError("MVAA: channels must divide evenly into heads");
}

MvaaParams::MvaaParams(const MvaaShape& shape) : shape_(shape) {
  shape_.validate();
  const std::size_t slots = shape_.slots();
  const std::size_t c = shape_.channels;
  const std::size_t d = shape_.head_dim();
  attention_weight = Param(Shape{slots, c});
  attention_bias = Param(Shape{slots});
  offset_weight = Param(Shape{slots * 2, c});
  offset_bias = Param(Shape{shape_.heads, shape_.scales, shape_.views, shape_.points, 2},
                      /*trainable=*/false);
  offset_bias.value = init_offset_bias(shape_.heads, shape_.scales, shape_.views, shape_.points);
  value_proj = Param(Shape{c, shape_.value_channels});
  output_proj = Param(Shape{shape_.heads, d, d});
}

void MvaaParams::init(Rng& rng) {
  const double c = static_cast<double>(shape_.channels);
  rng.fill_uniform(attention_weight.value, -0.1 / std::sqrt(c), 0.1 / std::sqrt(c));
  attention_bias.value.fill(0);
  offset_weight.value.fill(0);
  const double vb = 1.0 / std::sqrt(static_cast<double>(shape_.value_channels));
  rng.fill_uniform(value_proj.value, -vb, vb);
  const double ob = 1.0 / std::sqrt(static_cast<double>(shape_.head_dim()));
  rng.fill_uniform(output_proj.value, -ob, ob);
}

void MvaaParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".attention_weight", attention_weight);
  fn(prefix + ".attention_bias", attention_bias);
  fn(prefix + ".offset_weight", offset_weight);
  fn(prefix + ".offset_bias", offset_bias);
  fn(prefix + ".value_proj", value_proj);
  fn(prefix + ".output_proj", output_proj);
}

Tensor init_offset_bias(std::size_t heads, std::size_t scales, std::size_t views,
                        std::size_t points) {
  if (heads == 0 || scales == 0 || views == 0 || points == 0) {
    throw DomainError("init_offset_bias: counts must be >= 1");
  }
  Tensor bias(Shape{heads, scales, views, points, 2});
  const Real spread = static_cast<Real>(heads * points);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t k = 1; k <= points; ++k) {
      const Real angle =
          2 * std::numbers::pi_v<Real> * static_cast<Real>(h * points + k) / spread;
      const Real norm = static_cast<Real>(k);
      for (std::size_t l = 0; l < scales; ++l) {
        for (std::size_t t = 0; t < views; ++t) {
          bias.at({h, l, t, k - 1, 0}) = norm * std::cos(angle);
          bias.at({h, l, t, k - 1, 1}) = norm * std::sin(angle);
        }
      }
    }
  }
  return bias;
}

namespace {

std::size_t block_size(const MvaaShape& s) { return s.scales * s.views * s.points; }

// Per-head softmax over (l, t, k) with invisible views dropped.
bool head_softmax(const MvaaShape& s, std::span<const Real> logits,
                  std::span<const std::uint8_t> visible_views, std::span<Real> weights) {
  const std::size_t block = block_size(s);
  std::vector<std::uint8_t> keep(block);
  for (std::size_t l = 0; l < s.scales; ++l) {
    for (std::size_t t = 0; t < s.views; ++t) {
      for (std::size_t k = 0; k < s.points; ++k) {
        keep[(l * s.views + t) * s.points + k] = visible_views[t];
      }
    }
  }
  bool any = false;
  for (std::size_t h = 0; h < s.heads; ++h) {
    any = softmax_masked(logits.subspan(h * block, block), keep,
                         weights.subspan(h * block, block)) ||
          any;
  }
  return any;
}

// Index-space sampling location on level l of view t for one slot.
struct SampleLocation {
  Real x;
  Real y;
  Real dx_doffset;
  Real dy_doffset;
};

SampleLocation sample_location(const MvaaShape& s, Real u, Real v, Real off_x, Real off_y,
                               std::size_t height, std::size_t width) {
  const Real sx = width > 1 ? static_cast<Real>(width - 1) : Real(0);
  const Real sy = height > 1 ? static_cast<Real>(height - 1) : Real(0);
  if (s.offset_units == OffsetUnits::kNormalized) {
    return {(u + off_x) * sx, (v + off_y) * sy, sx, sy};
  }
  return {u * sx + off_x, v * sy + off_y, Real(1), Real(1)};
}

void check_inputs(const Tensor& queries, const FeaturePyramid& pyramid,
                  const EyeProjections& projections, const MvaaShape& s) {
  if (queries.rank() != 2 || queries.extent(1) != s.channels) {
    throw ConfigError("MVAA: queries must be N x " + std::to_string(s.channels));
  }
  if (projections.eyes != queries.extent(0)) throw ConfigError("MVAA: projection count mismatch");
  if (pyramid.views != s.views || pyramid.scales != s.scales || projections.views != s.views) {
    throw ConfigError("MVAA: pyramid views/scales do not match parameters");
  }
  if (pyramid.channels() != s.value_channels) {
    throw ConfigError("MVAA: pyramid channels do not match value projection");
  }
}

}  // namespace

AttentionWeights attention_weights(const MvaaParams& params, std::span<const Real> query,
                                   std::span<const std::uint8_t> visible_views) {
  const auto& s = params.shape();
  if (visible_views.size() != s.views) throw DimensionError("attention_weights: view mask size");
  const auto logits = linear(params.attention_weight.value, params.attention_bias.value.values(), query);
  AttentionWeights out;
  out.weights.assign(s.slots(), Real(0));
  out.blind = !head_softmax(s, logits, visible_views, out.weights);
  return out;
}

std::vector<Real> sampling_offsets(const MvaaParams& params, std::span<const Real> query) {
  return linear(params.offset_weight.value, params.offset_bias.value.values(), query);
}

Tensor mvaa_forward(const Tensor& queries, const FeaturePyramid& pyramid,
                    const EyeProjections& projections, const MvaaParams& params,
                    MvaaCache* cache) {
  const auto& s = params.shape();
  check_inputs(queries, pyramid, projections, s);
  const std::size_t n = queries.extent(0);
  const std::size_t c = s.channels;
  const std::size_t d = s.head_dim();
  const std::size_t slots = s.slots();
  const std::size_t block = block_size(s);

  // Project every pyramid level once: V = x W'^T, all heads stacked.
  std::vector<Tensor> values(pyramid.maps.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Tensor& m = pyramid.maps[i];
    values[i] = Tensor(Shape{m.extent(0), m.extent(1), c});
    affine_rows(m.data(), m.extent(0) * m.extent(1), s.value_channels, params.value_proj.value.data(),
                nullptr, c, values[i].data());
  }

  Tensor weights(Shape{n, slots});
  Tensor offsets(Shape{n, slots * 2});
  Tensor aggregated(Shape{n, c});
  Tensor out(Shape{n, c});
  std::vector<std::uint8_t> blind(n, 0);
  std::vector<Real> logits(slots);
  std::vector<Real> sample(d);

  for (std::size_t q = 0; q < n; ++q) {
    const auto y = queries.row(q);
    affine_rows(y.data(), 1, c, params.attention_weight.value.data(),
                params.attention_bias.value.data(), slots, logits.data());
    auto wq = weights.row(q);
    if (!head_softmax(s, logits, projections.visible_views(q), wq)) {
      blind[q] = 1;
      continue;
    }
    auto oq = offsets.row(q);
    affine_rows(y.data(), 1, c, params.offset_weight.value.data(), params.offset_bias.value.data(),
                slots * 2, oq.data());
    auto agg = aggregated.row(q);
    for (std::size_t h = 0; h < s.heads; ++h) {
      for (std::size_t l = 0; l < s.scales; ++l) {
        for (std::size_t t = 0; t < s.views; ++t) {
          if (!projections.is_visible(q, t)) continue;
          const Tensor& vm = values[t * s.scales + l];
          const MapView view = MapView::of(vm);
          const Real u = projections.u[q * s.views + t];
          const Real v = projections.v[q * s.views + t];
          for (std::size_t k = 0; k < s.points; ++k) {
            const std::size_t sl = params.slot(h, l, t, k);
            const Real a = wq[sl];
            const auto loc =
                sample_location(s, u, v, oq[2 * sl], oq[2 * sl + 1], view.height, view.width);
            const auto taps = bilinear_taps(loc.x, loc.y, view.height, view.width);
            gather_taps(view, taps, h * d, sample);
            for (std::size_t i = 0; i < d; ++i) agg[h * d + i] += a * sample[i];
          }
        }
      }
      const Real* wh = params.output_proj.value.data() + h * d * d;
      affine_rows(agg.data() + h * d, 1, d, wh, nullptr, d, out.data() + q * c + h * d);
    }
    (void)block;
  }

  if (cache) {
    cache->weights = std::move(weights);
    cache->offsets = std::move(offsets);
    cache->aggregated = std::move(aggregated);
    cache->values = std::move(values);
    cache->blind = std::move(blind);
  }
  return out;
}

MvaaInputGrads mvaa_backward(const Tensor& grad_out, const Tensor& queries,
                             const FeaturePyramid& pyramid, const EyeProjections& projections,
                             MvaaParams& params, const MvaaCache& cache) {
  const auto& s = params.shape();
  const std::size_t n = queries.extent(0);
  const std::size_t c = s.channels;
  const std::size_t d = s.head_dim();
  const std::size_t slots = s.slots();
  const std::size_t block = block_size(s);

  MvaaInputGrads grads{Tensor(queries.shape()), pyramid.zeros_like()};
  std::vector<Tensor> grad_values(cache.values.size());
  for (std::size_t i = 0; i < grad_values.size(); ++i) {
    grad_values[i] = Tensor(cache.values[i].shape());
  }

  std::vector<Real> d_agg(c);
  std::vector<Real> d_weights(slots);
  std::vector<Real> d_logits(slots);
  std::vector<Real> d_offsets(slots * 2);
  std::vector<Real> sample(d);
  std::vector<Real> scaled(d);

  for (std::size_t q = 0; q < n; ++q) {
    if (cache.blind[q]) continue;
    const auto y = queries.row(q);
    const auto g = grad_out.row(q);
    const auto wq = cache.weights.row(q);
    const auto oq = cache.offsets.row(q);
    const auto agg = cache.aggregated.row(q);
    std::fill(d_agg.begin(), d_agg.end(), Real(0));
    std::fill(d_weights.begin(), d_weights.end(), Real(0));
    std::fill(d_offsets.begin(), d_offsets.end(), Real(0));

    for (std::size_t h = 0; h < s.heads; ++h) {
      const Real* wh = params.output_proj.value.data() + h * d * d;
      Real* dwh = params.output_proj.trainable ? params.output_proj.grad.data() + h * d * d : nullptr;
      affine_rows_backward(agg.data() + h * d, 1, d, wh, d, g.data() + h * d, dwh, nullptr,
                           d_agg.data() + h * d);
      const std::span<const Real> dah(d_agg.data() + h * d, d);
      for (std::size_t l = 0; l < s.scales; ++l) {
        for (std::size_t t = 0; t < s.views; ++t) {
          if (!projections.is_visible(q, t)) continue;
          const std::size_t mi = t * s.scales + l;
          const MapView view = MapView::of(cache.values[mi]);
          const Real u = projections.u[q * s.views + t];
          const Real v = projections.v[q * s.views + t];
          for (std::size_t k = 0; k < s.points; ++k) {
            const std::size_t sl = params.slot(h, l, t, k);
            const Real a = wq[sl];
            const auto loc =
                sample_location(s, u, v, oq[2 * sl], oq[2 * sl + 1], view.height, view.width);
            const auto taps = bilinear_taps(loc.x, loc.y, view.height, view.width);
            gather_taps(view, taps, h * d, sample);
            Real dot = 0;
            for (std::size_t i = 0; i < d; ++i) {
              dot += sample[i] * dah[i];
              scaled[i] = a * dah[i];
            }
            d_weights[sl] = dot;
            scatter_taps(taps, scaled, c, h * d, grad_values[mi].data());
            const auto dloc = taps_location_grad(view, taps, h * d, scaled);
            d_offsets[2 * sl] = dloc[0] * loc.dx_doffset;
            d_offsets[2 * sl + 1] = dloc[1] * loc.dy_doffset;
          }
        }
      }
      softmax_backward(wq.subspan(h * block, block),
                       std::span<const Real>(d_weights).subspan(h * block, block),
                       std::span<Real>(d_logits).subspan(h * block, block));
    }

    Real* dy = grads.queries.data() + q * c;
    affine_rows_backward(y.data(), 1, c, params.attention_weight.value.data(), slots,
                         d_logits.data(),
                         params.attention_weight.trainable ? params.attention_weight.grad.data() : nullptr,
                         params.attention_bias.trainable ? params.attention_bias.grad.data() : nullptr,
                         dy);
    affine_rows_backward(y.data(), 1, c, params.offset_weight.value.data(), slots * 2,
                         d_offsets.data(),
                         params.offset_weight.trainable ? params.offset_weight.grad.data() : nullptr,
                         params.offset_bias.trainable ? params.offset_bias.grad.data() : nullptr, dy);
  }

  for (std::size_t i = 0; i < grad_values.size(); ++i) {
    const Tensor& m = pyramid.maps[i];
    affine_rows_backward(m.data(), m.extent(0) * m.extent(1), s.value_channels,
                         params.value_proj.value.data(), c, grad_values[i].data(),
                         params.value_proj.trainable ? params.value_proj.grad.data() : nullptr,
                         nullptr, grads.pyramid.maps[i].data());
  }
  return grads;
}

Tensor mvaa(const EyeState& state, const FeaturePyramid& pyramid, const geometry::CameraRig& rig,
            const MvaaParams& params) {
  const auto projections = project_eyes(rig, state.positions);
  return mvaa_forward(state.embeddings, pyramid, projections, params, nullptr);
}

}  // namespace ego3rt::attention
