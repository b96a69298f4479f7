#include "udock/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "udock/errors.hpp"

namespace udock::detector {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

using RowMajorMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMajorMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

GridEncoding encode_target(const Box& box, int g, int b) {
  const double eps = 1e-12;
  if (box.w < 0.0 || box.h < 0.0 || box.x < -eps || box.y < -eps ||
      box.x + box.w > 1.0 + eps || box.y + box.h > 1.0 + eps)
    throw BoxOutOfRange();
  GridEncoding enc;
  enc.target = GridTensor(g, b);
  const double cx = box.x + box.w / 2.0;
  const double cy = box.y + box.h / 2.0;
  const int col = std::min(g - 1, static_cast<int>(std::floor(cx * g)));
  const int row = std::min(g - 1, static_cast<int>(std::floor(cy * g)));
  enc.dock_cell = row * g + col;
  const double off_x = cx * g - col;
  const double off_y = cy * g - row;
  for (int slot = 0; slot < b; ++slot) {
    enc.target.at(enc.dock_cell, slot, 0) = off_x;
    enc.target.at(enc.dock_cell, slot, 1) = off_y;
    enc.target.at(enc.dock_cell, slot, 2) = box.w;
    enc.target.at(enc.dock_cell, slot, 3) = box.h;
    enc.target.at(enc.dock_cell, slot, 4) = 1.0;
  }
  return enc;
}

GridEncoding encode_background(int g, int b) {
  GridEncoding enc;
  enc.target = GridTensor(g, b);
  enc.dock_cell = -1;
  return enc;
}

double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

/// Decodes box fields of one slot to a normalized image box without any
/// clamping of the center; w,h floor at zero so IoU stays defined.
Box slot_to_box(const GridTensor& t, int cell, int slot) {
  const int col = cell % t.g;
  const int row = cell / t.g;
  const double cx = (col + t.at(cell, slot, 0)) / t.g;
  const double cy = (row + t.at(cell, slot, 1)) / t.g;
  const double w = std::max(0.0, t.at(cell, slot, 2));
  const double h = std::max(0.0, t.at(cell, slot, 3));
  return {cx - w / 2.0, cy - h / 2.0, w, h};
}

}  // namespace

LossResult loss(const GridTensor& pred, const GridEncoding& target,
                const LossWeights& w) {
  if (pred.g != target.target.g || pred.b != target.target.b)
    throw ShapeMismatch("loss: prediction/target grids differ");
  for (double v : pred.values)
    if (!std::isfinite(v)) throw NonFiniteInput();

  LossResult res;
  res.grad = GridTensor(pred.g, pred.b);
  const int cells = pred.g * pred.g;
  const int dock = target.dock_cell;

  if (dock >= 0) {
    // responsibility: largest IoU against the ground truth, lower index wins
    const Box gt = slot_to_box(target.target, dock, 0);
    int responsible = 0;
    double best_iou = -1.0;
    for (int slot = 0; slot < pred.b; ++slot) {
      const double v = iou(slot_to_box(pred, dock, slot), gt);
      if (v > best_iou) {
        best_iou = v;
        responsible = slot;
      }
    }
    res.responsible_box = responsible;

    const double tx = target.target.at(dock, responsible, 0);
    const double ty = target.target.at(dock, responsible, 1);
    const double tw = target.target.at(dock, responsible, 2);
    const double th = target.target.at(dock, responsible, 3);
    const double px = pred.at(dock, responsible, 0);
    const double py = pred.at(dock, responsible, 1);
    const double pw_raw = pred.at(dock, responsible, 2);
    const double ph_raw = pred.at(dock, responsible, 3);
    const double pw = std::max(pw_raw, 1e-8);
    const double ph = std::max(ph_raw, 1e-8);
    const double root_dw = std::sqrt(tw) - std::sqrt(pw);
    const double root_dh = std::sqrt(th) - std::sqrt(ph);
    res.box_term = (tx - px) * (tx - px) + (ty - py) * (ty - py) +
                   root_dw * root_dw + root_dh * root_dh;
    res.grad.at(dock, responsible, 0) = w.lambda_box * -2.0 * (tx - px);
    res.grad.at(dock, responsible, 1) = w.lambda_box * -2.0 * (ty - py);
    if (pw_raw > 1e-8)
      res.grad.at(dock, responsible, 2) = w.lambda_box * -root_dw / std::sqrt(pw);
    if (ph_raw > 1e-8)
      res.grad.at(dock, responsible, 3) = w.lambda_box * -root_dh / std::sqrt(ph);

    // confidence in the station cell: 1 for the responsible box, 0 for the
    // others
    for (int slot = 0; slot < pred.b; ++slot) {
      const double s_target = slot == responsible ? 1.0 : 0.0;
      const double s = pred.at(dock, slot, 4);
      res.dock_term += (s_target - s) * (s_target - s);
      res.grad.at(dock, slot, 4) += w.lambda_dock * -2.0 * (s_target - s);
    }
  }

  for (int cell = 0; cell < cells; ++cell) {
    if (cell == dock) continue;
    for (int slot = 0; slot < pred.b; ++slot) {
      const double s = pred.at(cell, slot, 4);
      res.nodock_term += s * s;
      res.grad.at(cell, slot, 4) += w.lambda_nodock * 2.0 * s;
    }
  }

  res.total = w.lambda_box * res.box_term + w.lambda_dock * res.dock_term +
              w.lambda_nodock * res.nodock_term;
  return res;
}

Detection decode_prediction(const GridTensor& pred, int image_width,
                            int image_height) {
  Detection det;
  const int cells = pred.g * pred.g;
  double best = -std::numeric_limits<double>::infinity();
  for (int cell = 0; cell < cells; ++cell) {
    for (int slot = 0; slot < pred.b; ++slot) {
      const double s = pred.at(cell, slot, 4);
      if (s > best) {
        best = s;
        det.cell = cell;
        det.box_index = slot;
      }
    }
  }
  det.confidence = best;

  const int col = det.cell % pred.g;
  const int row = det.cell / pred.g;
  const double off_x = std::clamp(pred.at(det.cell, det.box_index, 0), 0.0, 1.0);
  const double off_y = std::clamp(pred.at(det.cell, det.box_index, 1), 0.0, 1.0);
  const double bw = std::clamp(pred.at(det.cell, det.box_index, 2), 0.0, 1.0);
  const double bh = std::clamp(pred.at(det.cell, det.box_index, 3), 0.0, 1.0);
  const double cx = (col + off_x) / pred.g;
  const double cy = (row + off_y) / pred.g;
  const double x0 = std::clamp(cx - bw / 2.0, 0.0, 1.0);
  const double y0 = std::clamp(cy - bh / 2.0, 0.0, 1.0);
  const double x1 = std::clamp(cx + bw / 2.0, 0.0, 1.0);
  const double y1 = std::clamp(cy + bh / 2.0, 0.0, 1.0);
  det.box_norm = {x0, y0, x1 - x0, y1 - y0};
  det.box_px = {x0 * image_width, y0 * image_height, (x1 - x0) * image_width,
                (y1 - y0) * image_height};

  det.confidence_map.assign(cells, 0.0);
  for (int cell = 0; cell < cells; ++cell) {
    double m = pred.at(cell, 0, 4);
    for (int slot = 1; slot < pred.b; ++slot)
      m = std::max(m, pred.at(cell, slot, 4));
    det.confidence_map[cell] = m;
  }
  return det;
}

int NetConfig::spatial_after_convs() const {
  int s = input_size;
  for (std::size_t i = 0; i < conv_filters.size(); ++i) {
    if (s % 2 != 0) throw ShapeMismatch("net: spatial size not divisible by 2");
    s /= 2;
  }
  return s;
}

int NetConfig::flatten_size() const {
  const int s = spatial_after_convs();
  return s * s * (conv_filters.empty() ? in_channels : conv_filters.back());
}

void NetConfig::validate() const {
  if (input_size <= 0 || in_channels <= 0 || g <= 0 || b <= 0)
    throw ShapeMismatch("net: bad dimensions");
  if (conv_filters.empty()) throw ShapeMismatch("net: no conv stages");
  spatial_after_convs();
}

TinyNet::TinyNet(NetConfig config) : config_(std::move(config)) {
  config_.validate();
  build_views();
}

void TinyNet::build_views() {
  std::size_t offset = 0;
  int in = config_.in_channels;
  for (int filters : config_.conv_filters) {
    Views v{offset, filters, in * 9};
    conv_views_.push_back(v);
    offset += static_cast<std::size_t>(filters) * in * 9 + filters;
    in = filters;
  }
  int cols = config_.flatten_size();
  std::vector<int> stage_sizes = config_.fc_sizes;
  stage_sizes.push_back(config_.output_size());
  for (int rows : stage_sizes) {
    Views v{offset, rows, cols};
    fc_views_.push_back(v);
    offset += static_cast<std::size_t>(rows) * cols + rows;
    cols = rows;
  }
  params_.assign(offset, 0.0);
}

void TinyNet::init_params(Rng& rng) {
  for (const Views& v : conv_views_) {
    const double stddev = std::sqrt(2.0 / v.cols);
    double* w = params_.data() + v.offset;
    for (int i = 0; i < v.rows * v.cols; ++i) w[i] = stddev * rng.normal();
    // biases stay zero
  }
  for (std::size_t s = 0; s < fc_views_.size(); ++s) {
    const Views& v = fc_views_[s];
    const bool last = s + 1 == fc_views_.size();
    const double stddev = last ? 0.1 * std::sqrt(1.0 / v.cols)
                               : std::sqrt(2.0 / v.cols);
    double* w = params_.data() + v.offset;
    for (int i = 0; i < v.rows * v.cols; ++i) w[i] = stddev * rng.normal();
    if (last) {
      // start boxes centered with positive extents (the sqrt term has no
      // gradient below its clamp) and confidences low
      double* bias = w + static_cast<std::size_t>(v.rows) * v.cols;
      for (int i = 0; i < v.rows; ++i) {
        switch (i % 5) {
          case 0:
          case 1: bias[i] = 0.5; break;
          case 2:
          case 3: bias[i] = 0.25; break;
          default: bias[i] = -1.0; break;
        }
      }
    }
  }
}

namespace {

/// im2col for a 3x3 kernel with zero 'same' padding.
/// Output rows: c*9 + ky*3 + kx; columns: y*width + x.
void im2col_3x3(const MatrixXd& feat, int width, int height, MatrixXd& cols) {
  const int channels = static_cast<int>(feat.rows());
  cols.setZero(channels * 9, width * height);
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const int r = c * 9 + ky * 3 + kx;
        for (int y = 0; y < height; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= height) continue;
          for (int x = 0; x < width; ++x) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= width) continue;
            cols(r, y * width + x) = feat(c, sy * width + sx);
          }
        }
      }
    }
  }
}

void col2im_3x3(const MatrixXd& cols, int width, int height, MatrixXd& feat) {
  const int channels = static_cast<int>(feat.rows());
  feat.setZero();
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const int r = c * 9 + ky * 3 + kx;
        for (int y = 0; y < height; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= height) continue;
          for (int x = 0; x < width; ++x) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= width) continue;
            feat(c, sy * width + sx) += cols(r, y * width + x);
          }
        }
      }
    }
  }
}

}  // namespace

Eigen::MatrixXd conv3x3_same(const Eigen::MatrixXd& feat, int width, int height,
                             const Eigen::MatrixXd& weights,
                             const Eigen::VectorXd& bias) {
  if (feat.cols() != static_cast<Eigen::Index>(width) * height ||
      weights.cols() != feat.rows() * 9 || bias.size() != weights.rows())
    throw ShapeMismatch("conv3x3_same: inconsistent shapes");
  MatrixXd cols;
  im2col_3x3(feat, width, height, cols);
  MatrixXd out = weights * cols;
  out.colwise() += bias;
  return out;
}

ForwardResult TinyNet::forward(const ImageBuffer& image) const {
  if (image.width != config_.input_size || image.height != config_.input_size ||
      image.channels != config_.in_channels)
    throw ShapeMismatch("forward: image does not match the net input");

  ForwardResult out;
  ForwardTape& tape = out.tape;
  const int n_conv = static_cast<int>(config_.conv_filters.size());
  tape.conv_in_cols.resize(n_conv);
  tape.conv_pre_relu.resize(n_conv);
  tape.pool_argmax.resize(n_conv);

  int width = config_.input_size, height = config_.input_size;
  MatrixXd feat(config_.in_channels, width * height);
  for (int c = 0; c < config_.in_channels; ++c)
    for (int i = 0; i < width * height; ++i)
      feat(c, i) = image.data[static_cast<std::size_t>(c) * width * height + i];

  for (int stage = 0; stage < n_conv; ++stage) {
    const Views& v = conv_views_[stage];
    ConstRowMajorMap weight(params_.data() + v.offset, v.rows, v.cols);
    Eigen::Map<const VectorXd> bias(
        params_.data() + v.offset + static_cast<std::size_t>(v.rows) * v.cols,
        v.rows);
    im2col_3x3(feat, width, height, tape.conv_in_cols[stage]);
    MatrixXd& pre = tape.conv_pre_relu[stage];
    pre.noalias() = weight * tape.conv_in_cols[stage];
    pre.colwise() += bias;

    const int pw = width / 2, ph = height / 2;
    MatrixXd pooled(v.rows, pw * ph);
    std::vector<int>& argmax = tape.pool_argmax[stage];
    argmax.assign(static_cast<std::size_t>(v.rows) * pw * ph, 0);
    for (int c = 0; c < v.rows; ++c) {
      for (int py = 0; py < ph; ++py) {
        for (int px = 0; px < pw; ++px) {
          double best = -std::numeric_limits<double>::infinity();
          int best_idx = 0;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const int idx = (py * 2 + dy) * width + px * 2 + dx;
              const double val = std::max(0.0, pre(c, idx));
              if (val > best) {  // first-found tie keeps the earlier index
                best = val;
                best_idx = idx;
              }
            }
          }
          pooled(c, py * pw + px) = best;
          argmax[static_cast<std::size_t>(c) * pw * ph + py * pw + px] = best_idx;
        }
      }
    }
    feat = std::move(pooled);
    width = pw;
    height = ph;
  }

  VectorXd vec(feat.size());
  for (int c = 0; c < feat.rows(); ++c)
    for (int i = 0; i < feat.cols(); ++i) vec(c * feat.cols() + i) = feat(c, i);

  const int n_fc = static_cast<int>(fc_views_.size());
  tape.fc_inputs.resize(n_fc);
  tape.fc_pre_relu.resize(n_fc - 1);
  for (int stage = 0; stage < n_fc; ++stage) {
    const Views& v = fc_views_[stage];
    ConstRowMajorMap weight(params_.data() + v.offset, v.rows, v.cols);
    Eigen::Map<const VectorXd> bias(
        params_.data() + v.offset + static_cast<std::size_t>(v.rows) * v.cols,
        v.rows);
    tape.fc_inputs[stage] = vec;
    VectorXd pre = weight * vec + bias;
    if (stage + 1 < n_fc) {
      tape.fc_pre_relu[stage] = pre;
      vec = pre.cwiseMax(0.0);
    } else {
      vec = pre;
    }
  }
  tape.raw_output = vec;

  out.pred = GridTensor(config_.g, config_.b);
  for (std::size_t i = 0; i < out.pred.values.size(); ++i) {
    const double raw = vec(static_cast<Eigen::Index>(i));
    out.pred.values[i] = (i % 5 == 4) ? 1.0 / (1.0 + std::exp(-raw)) : raw;
  }
  return out;
}

std::vector<double> TinyNet::backward(const ForwardTape& tape,
                                      const GridTensor& grad_pred) const {
  if (grad_pred.values.size() != static_cast<std::size_t>(config_.output_size()))
    throw ShapeMismatch("backward: gradient size mismatch");
  std::vector<double> grads(params_.size(), 0.0);

  VectorXd dvec(config_.output_size());
  for (int i = 0; i < config_.output_size(); ++i) {
    double g = grad_pred.values[i];
    if (i % 5 == 4) {
      const double s = 1.0 / (1.0 + std::exp(-tape.raw_output(i)));
      g *= s * (1.0 - s);
    }
    dvec(i) = g;
  }

  const int n_fc = static_cast<int>(fc_views_.size());
  for (int stage = n_fc - 1; stage >= 0; --stage) {
    const Views& v = fc_views_[stage];
    ConstRowMajorMap weight(params_.data() + v.offset, v.rows, v.cols);
    RowMajorMap dweight(grads.data() + v.offset, v.rows, v.cols);
    Eigen::Map<VectorXd> dbias(
        grads.data() + v.offset + static_cast<std::size_t>(v.rows) * v.cols,
        v.rows);
    dweight.noalias() = dvec * tape.fc_inputs[stage].transpose();
    dbias = dvec;
    VectorXd dprev = weight.transpose() * dvec;
    if (stage > 0) {
      dprev.array() *= (tape.fc_pre_relu[stage - 1].array() > 0.0).cast<double>();
    }
    dvec = std::move(dprev);
  }

  const int n_conv = static_cast<int>(config_.conv_filters.size());
  int spatial = config_.spatial_after_convs();
  MatrixXd dfeat(config_.conv_filters.back(), spatial * spatial);
  for (int c = 0; c < dfeat.rows(); ++c)
    for (int i = 0; i < dfeat.cols(); ++i)
      dfeat(c, i) = dvec(c * dfeat.cols() + i);

  for (int stage = n_conv - 1; stage >= 0; --stage) {
    const Views& v = conv_views_[stage];
    const int pw = spatial, ph = spatial;  // pooled dims of this stage
    const int width = pw * 2, height = ph * 2;
    // unpool into the pre-pool map, through the ReLU mask
    const MatrixXd& pre = tape.conv_pre_relu[stage];
    MatrixXd dpre = MatrixXd::Zero(v.rows, width * height);
    const std::vector<int>& argmax = tape.pool_argmax[stage];
    for (int c = 0; c < v.rows; ++c) {
      for (int i = 0; i < pw * ph; ++i) {
        const int src = argmax[static_cast<std::size_t>(c) * pw * ph + i];
        if (pre(c, src) > 0.0) dpre(c, src) += dfeat(c, i);
      }
    }

    ConstRowMajorMap weight(params_.data() + v.offset, v.rows, v.cols);
    RowMajorMap dweight(grads.data() + v.offset, v.rows, v.cols);
    Eigen::Map<VectorXd> dbias(
        grads.data() + v.offset + static_cast<std::size_t>(v.rows) * v.cols,
        v.rows);
    dweight.noalias() = dpre * tape.conv_in_cols[stage].transpose();
    dbias = dpre.rowwise().sum();

    if (stage > 0) {
      MatrixXd dcols = weight.transpose() * dpre;
      const int prev_channels = config_.conv_filters[stage - 1];
      dfeat.resize(prev_channels, width * height);
      col2im_3x3(dcols, width, height, dfeat);
    }
    spatial = width;
  }
  return grads;
}

void TinyNet::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoFailure("cannot open for write: " + path);
  json header;
  header["schema_version"] = 1;
  header["input_size"] = config_.input_size;
  header["in_channels"] = config_.in_channels;
  header["conv_filters"] = config_.conv_filters;
  header["fc_sizes"] = config_.fc_sizes;
  header["G"] = config_.g;
  header["B"] = config_.b;
  const std::string head = header.dump();
  f << "UDCKNET1\n" << head << "\n";
  const std::uint64_t count = params_.size();
  f.write(reinterpret_cast<const char*>(&count), sizeof(count));
  f.write(reinterpret_cast<const char*>(params_.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!f) throw IoFailure("write failed: " + path);
}

TinyNet TinyNet::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoFailure("cannot open for read: " + path);
  std::string magic, head;
  std::getline(f, magic);
  if (magic != "UDCKNET1") throw IoFailure("bad checkpoint magic: " + path);
  std::getline(f, head);
  const json header = json::parse(head);
  NetConfig config;
  config.input_size = header.at("input_size").get<int>();
  config.in_channels = header.at("in_channels").get<int>();
  config.conv_filters = header.at("conv_filters").get<std::vector<int>>();
  config.fc_sizes = header.at("fc_sizes").get<std::vector<int>>();
  config.g = header.at("G").get<int>();
  config.b = header.at("B").get<int>();
  TinyNet net(config);
  std::uint64_t count = 0;
  f.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!f || count != net.params_.size())
    throw IoFailure("checkpoint parameter count mismatch: " + path);
  f.read(reinterpret_cast<char*>(net.params_.data()),
         static_cast<std::streamsize>(count * sizeof(double)));
  if (!f) throw IoFailure("truncated checkpoint: " + path);
  return net;
}

std::vector<EpochStats> train(TinyNet& net, const DatasetManifest& manifest,
                              const std::string& dataset_dir,
                              const LossWeights& weights,
                              const SgdConfig& sgd) {
  if (manifest.samples.empty())
    throw PreconditionViolation("train: empty manifest");
  const NetConfig& cfg = net.config();

  // cache images as bytes; conversion back to [0,1] is exact and cheap
  const std::size_t n = manifest.samples.size();
  std::vector<std::vector<std::uint8_t>> images(n);
  std::vector<GridEncoding> targets(n);
  for (std::size_t i = 0; i < n; ++i) {
    const SampleRecord& rec = manifest.samples[i];
    const ImageBuffer img = read_pnm(dataset_dir + "/" + rec.path);
    if (img.width != cfg.input_size || img.height != cfg.input_size ||
        img.channels != cfg.in_channels)
      throw ShapeMismatch("train: sample does not match the net input");
    images[i].resize(img.data.size());
    for (std::size_t j = 0; j < img.data.size(); ++j)
      images[i][j] = static_cast<std::uint8_t>(
          std::lround(std::clamp(img.data[j], 0.0, 1.0) * 255.0));
    targets[i] = rec.label == "foreground"
                     ? encode_target(rec.box, cfg.g, cfg.b)
                     : encode_background(cfg.g, cfg.b);
  }

  std::vector<double> velocity(net.param_count(), 0.0);
  std::vector<double> grad_accum(net.param_count(), 0.0);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng shuffle_rng(sgd.seed);

  ImageBuffer input(cfg.input_size, cfg.input_size, cfg.in_channels);
  std::vector<EpochStats> curve;
  curve.reserve(sgd.epochs);
  const int batch = std::max(1, sgd.batch);

  double lr = sgd.lr;
  for (int epoch = 0; epoch < sgd.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    EpochStats stats;
    stats.epoch = epoch;
    std::size_t cursor = 0;
    while (cursor < n) {
      const std::size_t take = std::min<std::size_t>(batch, n - cursor);
      std::fill(grad_accum.begin(), grad_accum.end(), 0.0);
      for (std::size_t j = 0; j < take; ++j) {
        const std::size_t idx = order[cursor + j];
        for (std::size_t p = 0; p < images[idx].size(); ++p)
          input.data[p] = images[idx][p] / 255.0;
        const ForwardResult fwd = net.forward(input);
        const LossResult l = loss(fwd.pred, targets[idx], weights);
        if (!std::isfinite(l.total)) throw DivergenceDetected();
        stats.box_term += l.box_term;
        stats.dock_term += l.dock_term;
        stats.nodock_term += l.nodock_term;
        stats.total += l.total;
        const std::vector<double> g = net.backward(fwd.tape, l.grad);
        for (std::size_t p = 0; p < g.size(); ++p) grad_accum[p] += g[p];
      }
      const double inv = 1.0 / static_cast<double>(take);
      std::vector<double>& params = net.params();
      for (std::size_t p = 0; p < params.size(); ++p) {
        velocity[p] = sgd.momentum * velocity[p] - lr * grad_accum[p] * inv;
        params[p] += velocity[p];
      }
      cursor += take;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    stats.box_term *= inv_n;
    stats.dock_term *= inv_n;
    stats.nodock_term *= inv_n;
    stats.total *= inv_n;
    curve.push_back(stats);
    lr *= sgd.lr_decay;
  }
  return curve;
}

void write_loss_curve_csv(const std::vector<EpochStats>& curve,
                          const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoFailure("cannot open for write: " + path);
  f << "# schema_version=1\n";
  f << "epoch,l_B,l_d,l_dbar,total\n";
  f.setf(std::ios::fmtflags(0), std::ios::floatfield);
  f.precision(17);
  for (const EpochStats& s : curve) {
    f << s.epoch << "," << s.box_term << "," << s.dock_term << ","
      << s.nodock_term << "," << s.total << "\n";
  }
  if (!f) throw IoFailure("write failed: " + path);
}

}  // namespace udock::detector
