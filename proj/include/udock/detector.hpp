#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "udock/image.hpp"
#include "udock/rng.hpp"
#include "udock/scene.hpp"

namespace udock::detector {

/// Prediction tensor over G x G cells with B boxes of 5 values each.
/// Field order per box: x, y (offsets within the owning cell, in cell
/// units), w, h (image-normalized), S (confidence).
struct GridTensor {
  int g = 7;
  int b = 2;
  std::vector<double> values;

  GridTensor() = default;
  GridTensor(int g_, int b_) : g(g_), b(b_), values(size_for(g_, b_), 0.0) {}

  static std::size_t size_for(int g, int b) {
    return static_cast<std::size_t>(g) * g * b * 5;
  }
  std::size_t index(int cell, int box, int field) const {
    return (static_cast<std::size_t>(cell) * b + box) * 5 + field;
  }
  double& at(int cell, int box, int field) { return values[index(cell, box, field)]; }
  double at(int cell, int box, int field) const { return values[index(cell, box, field)]; }
};

/// Ground-truth tensor plus the single cell owning the station center
/// (-1 for background samples).
struct GridEncoding {
  GridTensor target;
  int dock_cell = -1;
};

struct LossWeights {
  double lambda_box = 3.0;
  double lambda_dock = 0.5;
  double lambda_nodock = 0.1;
};

/// Encodes a normalized ground-truth box; a center exactly on a cell
/// boundary belongs to the higher-index cell. The box is written into every
/// box slot of the owning cell with confidence 1; the loss decides
/// responsibility against the current prediction.
/// Throws BoxOutOfRange when the box leaves the unit square.
GridEncoding encode_target(const Box& box, int g, int b);

/// Background (no station) encoding: all-zero targets.
GridEncoding encode_background(int g, int b);

/// Intersection over union of two boxes in common units; 0 when disjoint or
/// when either box has no area.
double iou(const Box& a, const Box& b);

struct LossResult {
  double total = 0.0;
  double box_term = 0.0;     // coordinate loss (before weighting)
  double dock_term = 0.0;    // confidence loss, station cell
  double nodock_term = 0.0;  // confidence loss, remaining cells
  int responsible_box = -1;  // box index chosen in the station cell
  GridTensor grad;           // d(total)/d(prediction entry)
};

/// Weighted sum of the coordinate, station-confidence and empty-cell
/// confidence terms. The responsible box is the one whose decoded box has
/// the largest IoU with the ground truth (ties to the lower index) and is
/// held constant during differentiation. Predicted w,h are clamped to
/// >= 1e-8 before the square roots. Throws NonFiniteInput.
LossResult loss(const GridTensor& pred, const GridEncoding& target,
                const LossWeights& w);

struct Detection {
  Box box_norm;          // normalized, clamped to the unit square
  Box box_px;            // de-normalized to image pixels
  double confidence = 0.0;
  int cell = 0;
  int box_index = 0;
  std::vector<double> confidence_map;  // G*G, max over the B boxes
};

/// Argmax of the predicted confidences; ties break to the lowest flat
/// (cell, box) index.
Detection decode_prediction(const GridTensor& pred, int image_width,
                            int image_height);

/// One zero-padded 3x3 convolution over a (channels, width*height) feature
/// map; weights are (filters, channels*9) with kernel rows c*9 + ky*3 + kx.
Eigen::MatrixXd conv3x3_same(const Eigen::MatrixXd& feat, int width, int height,
                             const Eigen::MatrixXd& weights,
                             const Eigen::VectorXd& bias);

/// Convolutional stack: [conv 3x3 same -> ReLU -> maxpool 2x2/2] per entry
/// of conv_filters, flatten, hidden fully-connected stages with ReLU, and a
/// linear output stage of g*g*b*5 values. Confidences take a sigmoid; the
/// box fields stay linear.
struct NetConfig {
  int input_size = 112;
  int in_channels = 1;
  std::vector<int> conv_filters = {8, 16, 32, 64};
  std::vector<int> fc_sizes = {256, 512};
  int g = 7;
  int b = 2;

  int spatial_after_convs() const;
  int flatten_size() const;
  int output_size() const { return g * g * b * 5; }
  void validate() const;
};

struct ForwardTape {
  std::vector<Eigen::MatrixXd> conv_in_cols;   // im2col per conv stage
  std::vector<Eigen::MatrixXd> conv_pre_relu;  // (filters, H*W)
  std::vector<std::vector<int>> pool_argmax;   // source column per pooled column
  std::vector<Eigen::VectorXd> fc_inputs;      // input to each FC stage
  std::vector<Eigen::VectorXd> fc_pre_relu;    // hidden FC pre-activations
  Eigen::VectorXd raw_output;                  // linear output stage
};

struct ForwardResult {
  GridTensor pred;  // sigmoid applied to confidence entries
  ForwardTape tape;
};

class TinyNet {
 public:
  explicit TinyNet(NetConfig config);

  const NetConfig& config() const { return config_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }

  /// He-scaled weights, zero biases, small final stage.
  void init_params(Rng& rng);

  /// Deterministic forward pass. Throws ShapeMismatch on wrong image size.
  ForwardResult forward(const ImageBuffer& image) const;

  /// Gradients of a scalar w.r.t. every parameter, given the gradient
  /// w.r.t. the prediction tensor. Maxpool routes to the first-found argmax.
  std::vector<double> backward(const ForwardTape& tape,
                               const GridTensor& grad_pred) const;

  void save(const std::string& path) const;
  static TinyNet load(const std::string& path);

 private:
  struct Views {
    std::size_t offset;
    int rows, cols;  // weight block shape; bias of length rows follows
  };
  NetConfig config_;
  std::vector<double> params_;
  std::vector<Views> conv_views_;
  std::vector<Views> fc_views_;

  void build_views();
};

struct SgdConfig {
  double lr = 0.005;
  double momentum = 0.9;
  int epochs = 30;
  int batch = 16;
  std::uint64_t seed = 1;
  double lr_decay = 1.0;  // per-epoch multiplier on the learning rate
};

struct EpochStats {
  int epoch = 0;
  double box_term = 0.0;
  double dock_term = 0.0;
  double nodock_term = 0.0;
  double total = 0.0;
};

/// Mini-batch SGD with momentum over the manifest samples (images read from
/// dataset_dir). Iteration order is a seeded shuffle and gradients reduce in
/// sample order, so a fixed seed reproduces the run bit for bit.
/// Throws DivergenceDetected when the loss stops being finite.
std::vector<EpochStats> train(TinyNet& net, const DatasetManifest& manifest,
                              const std::string& dataset_dir,
                              const LossWeights& weights, const SgdConfig& sgd);

void write_loss_curve_csv(const std::vector<EpochStats>& curve,
                          const std::string& path);

}  // namespace udock::detector
