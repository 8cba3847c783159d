#pragma once

#include <array>
#include <limits>
#include <string>
#include <vector>

#include "hcd/geometry.hpp"
#include "hcd/pipeline_io.hpp"

namespace hcd {

struct SubsetFilter {
  std::string name;
  double min_height = 0.0;
  double max_height = std::numeric_limits<double>::infinity();
  double min_visible = 0.0;
  double max_visible = 1.0;

  bool accepts(const AnnotatedBox& gt) const;
  void validate() const;
};

// Reasonable, Partial, Heavy, Near, Medium (and All).
SubsetFilter subset_by_name(const std::string& name);
std::vector<std::string> subset_names();

// Ground truth split into evaluated targets and ignore regions.
struct GtPartition {
  std::vector<BoundingBox> targets;
  std::vector<BoundingBox> ignore;
};

// Boxes failing the filter or flagged ignore become ignore regions.
GtPartition filter_subset(const std::vector<AnnotatedBox>& gts, const SubsetFilter& filter);

enum class DetOutcome { TruePositive, FalsePositive, Ignored };

struct ImageMatch {
  std::vector<double> scores;  // detections, descending
  std::vector<DetOutcome> outcomes;
  std::vector<bool> target_matched;  // per GtPartition::targets entry

  std::size_t num_targets() const { return target_matched.size(); }
};

// Greedy one-to-one matching in descending score order (input order breaks
// ties). A detection takes the unmatched target with the highest IoU >= iou;
// failing that, an ignore region with IoA >= iou makes it Ignored; otherwise
// it is a false positive.
ImageMatch match_detections(std::vector<Proposal> dets, const GtPartition& gts, double iou = 0.5);
ImageMatch match_detections(const std::vector<Proposal>& dets,
                            const std::vector<AnnotatedBox>& gts, const SubsetFilter& filter,
                            double iou = 0.5);

struct CurvePoint {
  double threshold = 0.0;
  double fppi = 0.0;
  double miss_rate = 1.0;
};

inline constexpr double kMissRateFloor = 1e-10;

struct EvalCurve {
  std::vector<CurvePoint> points;  // descending threshold
  std::array<double, 9> reference_fppi{};
  std::array<double, 9> reference_mr{};
  double log_average_mr = 1.0;
  std::size_t num_targets = 0;
  std::size_t num_images = 0;
};

std::array<double, 9> reference_fppi_points();

// Throws DataError when no targets exist (undefined metric).
EvalCurve compute_mr(const std::vector<ImageMatch>& runs, std::size_t num_images);

std::string curve_csv(const EvalCurve& curve);
// Log-log miss rate vs FPPI plot over FPPI [1e-3, 1e1].
std::string curve_svg(const std::vector<std::pair<std::string, EvalCurve>>& curves);

}  // namespace hcd
