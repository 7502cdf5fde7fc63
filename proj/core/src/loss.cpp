#include "odetex/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace odetex::loss {

using ad::Tensor;

FeatureBank FeatureBank::builtin(std::uint64_t seed,
                                 const std::vector<int>& channels) {
  FeatureBank bank;
  bank.seed = seed;
  Rng rng(seed);
  int cin = 3;
  for (int cout : channels) {
    const float std_dev = std::sqrt(2.0f / (cin * 9));
    std::vector<float> k(static_cast<std::size_t>(cout) * cin * 9);
    for (float& v : k) v = static_cast<float>(rng.normal()) * std_dev;
    bank.layers.push_back(
        {Tensor::constant({cout, cin, 3, 3}, std::move(k)),
         Tensor::zeros({cout})});
    cin = cout;
  }
  return bank;
}

FeatureBank FeatureBank::from_tensors(
    const std::vector<std::pair<std::string, Tensor>>& entries) {
  FeatureBank bank;
  for (std::size_t i = 0;; ++i) {
    const std::string prefix = "layer" + std::to_string(i) + ".";
    Tensor kernel, bias;
    for (const auto& [name, t] : entries) {
      if (name == prefix + "kernel") kernel = t;
      if (name == prefix + "bias") bias = t;
    }
    if (!kernel.defined()) break;
    if (!bias.defined())
      throw std::invalid_argument("FeatureBank: missing " + prefix + "bias");
    bank.layers.push_back({kernel.detach(), bias.detach()});
  }
  if (bank.layers.empty())
    throw std::invalid_argument("FeatureBank: no layer0.kernel entry");
  return bank;
}

std::vector<Tensor> extract_features(const Tensor& img,
                                     const FeatureBank& bank) {
  if (img.shape().size() != 3)
    throw std::invalid_argument("extract_features: expected [C,H,W]");
  std::vector<Tensor> feats;
  Tensor x = img;
  for (const auto& layer : bank.layers) {
    x = relu(conv2d_circular(x, layer.kernel, layer.bias));
    // Halve resolution while it stays even; small inputs keep their size.
    if (x.shape()[1] % 2 == 0 && x.shape()[2] % 2 == 0 && x.shape()[1] >= 4 &&
        x.shape()[2] >= 4)
      x = downsample2x(x);
    feats.push_back(x);
  }
  return feats;
}

namespace {

// [C,h,w] feature map or [C,m] point matrix -> [C,m].
Tensor as_points(const Tensor& t) {
  const auto& s = t.shape();
  if (s.size() == 2) return t;
  if (s.size() == 3) return reshape(t, {s[0], s[1] * s[2]});
  throw std::invalid_argument("loss: feature tensors must be [C,m] or [C,h,w]");
}

Tensor first_columns(const Tensor& points, int m) {
  if (points.shape()[1] == m) return points;
  return transpose2d(slice_rows(transpose2d(points), 0, m));
}

Tensor sq_sum(const Tensor& t) { return sum_all(mul(t, t)); }

}  // namespace

Tensor swd(const std::vector<Tensor>& features_a,
           const std::vector<Tensor>& features_b, int n_slices, Rng& rng) {
  if (features_a.size() != features_b.size())
    throw std::invalid_argument("swd: layer count mismatch");
  if (n_slices < 1) throw std::invalid_argument("swd: n_slices must be >= 1");
  Tensor total = Tensor::scalar(0.0f);
  for (std::size_t l = 0; l < features_a.size(); ++l) {
    Tensor a = as_points(features_a[l]);
    Tensor b = as_points(features_b[l]);
    const int c = a.shape()[0];
    if (b.shape()[0] != c)
      throw std::invalid_argument("swd: channel mismatch at layer " +
                                  std::to_string(l));
    const int m = std::min(a.shape()[1], b.shape()[1]);
    a = first_columns(a, m);
    b = first_columns(b, m);
    std::vector<float> dirs(static_cast<std::size_t>(n_slices) * c);
    for (int s = 0; s < n_slices; ++s) {
      const std::vector<float> u = rng.unit_vector(c);
      for (int j = 0; j < c; ++j) dirs[static_cast<std::size_t>(s) * c + j] = u[j];
    }
    Tensor slices = Tensor::constant({n_slices, c}, std::move(dirs));
    Tensor da = sort_rows(matmul(slices, a));
    Tensor db = sort_rows(matmul(slices, b));
    Tensor diff = sub(da, db);
    total = add(total, mean_all(mul(diff, diff)));
  }
  return total;
}

Tensor gram_loss(const std::vector<Tensor>& features_a,
                 const std::vector<Tensor>& features_b) {
  if (features_a.size() != features_b.size())
    throw std::invalid_argument("gram_loss: layer count mismatch");
  auto gram = [](const Tensor& f) {
    Tensor p = as_points(f);
    const float inv = 1.0f / (static_cast<float>(p.shape()[0]) * p.shape()[1]);
    return mul_scalar(matmul(p, transpose2d(p)), inv);
  };
  Tensor total = Tensor::scalar(0.0f);
  for (std::size_t l = 0; l < features_a.size(); ++l)
    total = add(total, sq_sum(sub(gram(features_a[l]), gram(features_b[l]))));
  return total;
}

Tensor crop_loss(const latent::LatentState& z_crop, const CropWindow& window,
                 const Tensor& target_frame,
                 const render::ShadingGeometry& geom_full,
                 const Tensor& intensity, const FeatureBank& bank, Rng& rng,
                 int n_crops, int n_slices, bool isotropic) {
  if (z_crop.height() != window.h || z_crop.width() != window.w)
    throw std::invalid_argument("crop_loss: state size != window size");
  if (n_crops < 1) throw std::invalid_argument("crop_loss: n_crops >= 1");
  const int th = target_frame.shape()[1], tw = target_frame.shape()[2];
  if (window.h > th || window.w > tw)
    throw std::invalid_argument("crop_loss: window larger than target frame");

  render::ShadingGeometry cgeom =
      render::crop_geometry(geom_full, window.y0, window.x0, window.h, window.w);
  Tensor img = latent::project_svbrdf(z_crop, cgeom, intensity, isotropic);
  std::vector<Tensor> fa = extract_features(img, bank);

  Tensor total = Tensor::scalar(0.0f);
  for (int k = 0; k < n_crops; ++k) {
    const int y0 = static_cast<int>(rng.below(th - window.h + 1));
    const int x0 = static_cast<int>(rng.below(tw - window.w + 1));
    std::vector<int> idx(static_cast<std::size_t>(window.h) * window.w);
    for (int y = 0; y < window.h; ++y)
      for (int x = 0; x < window.w; ++x)
        idx[y * window.w + x] = (y0 + y) * tw + (x0 + x);
    std::vector<Tensor> fb;
    {
      ad::NoGradGuard ng;
      Tensor win = gather_spatial(target_frame, idx, window.h, window.w);
      fb = extract_features(win, bank);
    }
    total = add(total, swd(fa, fb, n_slices, rng));
  }
  return total;
}

Tensor shuffle_init_loss(const latent::LatentState& z, const Tensor& target,
                         const render::ShadingGeometry& geom,
                         const Tensor& intensity, Rng& rng, int n_shuffles,
                         bool isotropic) {
  if (z.height() != geom.h || z.width() != geom.w)
    throw std::invalid_argument("shuffle_init_loss: state size != geometry");
  if (target.shape() != ad::Shape{3, geom.h, geom.w})
    throw std::invalid_argument("shuffle_init_loss: target size mismatch");
  if (n_shuffles < 1)
    throw std::invalid_argument("shuffle_init_loss: n_shuffles >= 1");
  Tensor total = Tensor::scalar(0.0f);
  for (int k = 0; k < n_shuffles; ++k) {
    const std::vector<int> perm = rng.permutation(geom.h * geom.w);
    render::ShadingGeometry pg =
        render::gather_geometry(geom, perm, geom.h, geom.w);
    Tensor img = latent::project_svbrdf(z, pg, intensity, isotropic);
    Tensor tp;
    {
      ad::NoGradGuard ng;
      tp = gather_spatial(target, perm, geom.h, geom.w);
    }
    Tensor diff = sub(img, tp);
    total = add(total, mean_all(mul(diff, diff)));
  }
  return total;
}

Tensor range_penalty(const latent::LatentState& z, float lambda, float h_max) {
  Tensor p;
  if (z.mode == field::Mode::kRgb) {
    Tensor x = slice_channels(z.data, 0, 3);
    Tensor lo = relu(neg(x));
    Tensor hi = relu(add_scalar(x, -1.0f));
    p = add(sq_sum(lo), sq_sum(hi));
  } else {
    Tensor hch = slice_channels(z.data, 8, 9);
    Tensor over = relu(add_scalar(hch, -h_max));
    Tensor under = relu(add_scalar(neg(hch), -h_max));
    p = add(sq_sum(over), sq_sum(under));
  }
  return mul_scalar(p, lambda);
}

}  // namespace odetex::loss
