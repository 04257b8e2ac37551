#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "jrffp/dataset_store.hpp"
#include "jrffp/models.hpp"
#include "jrffp/nn_core.hpp"

namespace jrffp {

struct PairingConfig {
  double random_branch_prob = 0.5;
  double margin = 1.0;
  ContrastiveForm form = ContrastiveForm::literal;

  void validate() const;
};

struct PairDraw {
  std::size_t identity = 0;
  bool random_branch = false;
};

/// With probability random_branch_prob a uniform identity in [0, class_count),
/// otherwise the argmax of the prediction.
PairDraw draw_pair_identity(const Prediction& prediction, std::size_t class_count, const PairingConfig& config,
                            Rng& rng);
std::size_t sample_pair_identity(const Prediction& prediction, std::size_t class_count,
                                 const PairingConfig& config, Rng& rng);

/// 0 when the pair shares an identity, 1 otherwise.
inline int legitimacy_label(Label p, Label p_hat) { return p == p_hat ? 0 : 1; }

/// Fixed epoch budget, stopping early once the epoch-mean loss has improved by
/// less than min_improvement for `patience` consecutive epochs.
struct EarlyStopConfig {
  bool enabled = true;
  double min_improvement = 1e-4;
  std::size_t patience = 5;
};

struct TrainingOptions {
  EarlyStopConfig early_stop;
  unsigned workers = 0;
  std::function<void(const std::string&)> log;
};

struct RffpTrainResult {
  RffpModel model;
  std::vector<double> loss_curve;  // epoch-mean cross-entropy
  double initial_loss = 0.0;       // mean cross-entropy before the first update
  std::size_t updates = 0;
  std::size_t epochs_run = 0;
  bool early_stopped = false;
  /// Parameter snapshot after every update (only when requested).
  std::vector<ParamSet> trajectory;
};

struct SiaTrainResult {
  SiaModel model;
  std::vector<double> loss_curve;  // epoch-mean contrastive loss
  std::size_t updates = 0;
  std::size_t epochs_run = 0;
  bool early_stopped = false;
  std::size_t similar_pairs = 0;
  std::size_t dissimilar_pairs = 0;
  std::size_t random_branch_draws = 0;
};

struct TrainReport {
  RffpModel rffp;
  SiaModel sia;
  std::vector<double> ce_curve;
  std::vector<double> con_curve;
  double initial_ce = 0.0;
  std::size_t rffp_updates = 0;
  std::size_t sia_updates = 0;
  std::size_t epochs_run = 0;
  bool early_stopped = false;
  std::size_t similar_pairs = 0;
  std::size_t dissimilar_pairs = 0;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  std::vector<ParamSet> rffp_trajectory;
};

/// Cross-entropy SGD on the prediction network. Final parameters are rounded
/// to binary32 so the returned model equals its checkpoint.
RffpTrainResult train_rffp(const DatasetSplit& train, const RffpArchitecture& arch, const OptimizerConfig& opt,
                           const TrainingOptions& options = {}, bool record_trajectory = false);

/// Siamese training against the enrollment database with the prediction
/// network frozen.
SiaTrainResult train_sia(const DatasetSplit& train, const EnrollmentDb& enrollment, const RffpModel& rffp,
                         const SiaArchitecture& arch, const PairingConfig& pairing, const OptimizerConfig& opt,
                         const TrainingOptions& options = {});

/// SIA-RFF ablation: the siamese network is trained on RFFP fingerprints, and
/// the enrollment entries are fingerprint-space means.
struct FingerprintEnrollment {
  std::map<Label, Tensor> entries;
};
Tensor flat_fingerprint(const RffpModel& rffp, const Spectrogram& s);
FingerprintEnrollment enroll_fingerprints(const DatasetSplit& train, const RffpModel& rffp);
SiaTrainResult train_sia_on_fingerprints(const DatasetSplit& train, const FingerprintEnrollment& enrollment,
                                         const RffpModel& rffp, const SiaArchitecture& arch,
                                         const PairingConfig& pairing, const OptimizerConfig& opt,
                                         const TrainingOptions& options = {});

/// Interleaved training: per mini-batch, one RFFP update followed by one SIA
/// update whose pair identities come from the predictions of that same
/// RFFP forward pass. With `train_sia_branch` false only the RFFP path runs.
TrainReport train_joint(const DatasetSplit& train, const EnrollmentDb& enrollment, const RffpArchitecture& rffp_arch,
                        const SiaArchitecture& sia_arch, const PairingConfig& pairing, const OptimizerConfig& opt,
                        const TrainingOptions& options = {}, bool train_sia_branch = true,
                        bool record_trajectory = false);

/// Mean cross-entropy of `model` over `split` (legitimate items only).
double mean_cross_entropy(const RffpModel& model, const DatasetSplit& split, unsigned workers = 0);

}  // namespace jrffp
