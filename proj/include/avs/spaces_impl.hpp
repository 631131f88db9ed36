#pragma once

// Template members of ModelParams; included from spaces.hpp.

#include <string>

namespace avs {

namespace detail {

inline const char* direction_name(std::size_t d) { return d == 0 ? "fwd" : "bwd"; }

template <typename Params, typename Fn>
void visit_model_tensors(Params& p, Fn&& fn) {
  for (std::size_t e = 0; e < p.recurrent.size(); ++e) {
    for (std::size_t d = 0; d < p.recurrent[e].size(); ++d) {
      const std::string prefix = "enc" + std::to_string(e) + "." + direction_name(d) + ".";
      p.recurrent[e][d].for_each_tensor(
          [&](const char* name, auto& tensor) { fn(prefix + name, tensor); });
    }
  }
  for (std::size_t j = 0; j < p.transforms.size(); ++j) {
    const std::string prefix = "transform" + std::to_string(j) + ".";
    fn(prefix + "weight", p.transforms[j].weight);
    fn(prefix + "bias", p.transforms[j].bias);
  }
  for (std::size_t s = 0; s < p.spaces.size(); ++s) {
    const std::string prefix = "space" + std::to_string(s) + ".";
    fn(prefix + "text.weight", p.spaces[s].text.weight);
    fn(prefix + "text.bias", p.spaces[s].text.bias);
    fn(prefix + "video.weight", p.spaces[s].video.weight);
    fn(prefix + "video.bias", p.spaces[s].video.bias);
  }
}

template <typename U, typename T>
AffineProjection<U> cast_affine(const AffineProjection<T>& a) {
  return {a.weight.template cast<U>(), a.bias.template cast<U>()};
}

}  // namespace detail

template <typename T>
template <typename Fn>
void ModelParams<T>::for_each_tensor(Fn&& fn) {
  detail::visit_model_tensors(*this, fn);
}

template <typename T>
template <typename Fn>
void ModelParams<T>::for_each_tensor(Fn&& fn) const {
  detail::visit_model_tensors(*this, fn);
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros_like() const {
  ModelParams out = *this;
  out.for_each_tensor([](const std::string&, auto& tensor) { tensor.setZero(); });
  return out;
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  for (const auto& dirs : recurrent) {
    auto& dst = out.recurrent.emplace_back();
    for (const auto& g : dirs) dst.push_back(g.template cast<U>());
  }
  for (const auto& t : transforms) out.transforms.push_back(detail::cast_affine<U>(t));
  for (const auto& s : spaces) {
    out.spaces.push_back({s.inputs, detail::cast_affine<U>(s.text), detail::cast_affine<U>(s.video)});
  }
  return out;
}

}  // namespace avs
