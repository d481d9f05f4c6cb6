#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gpp {

// Survival function of the standard normal: 1 - Phi(x).
double normal_ccdf(double x);

// Challenge score for one bone: 2 * ccdf(|pred - true| / 3). Equals 1 only
// for an exact hit and decays smoothly with the plane error.
double plane_score(int pred, int truth);

struct PredictionRow {
    std::string volume_id;
    int gppi_pred = 0;
    std::string method;
    std::string model_id;
};

struct TruthRow {
    std::string volume_id;
    int gppi = 0;
    std::string study;
};

struct ScoreRow {
    std::string volume_id;
    int true_gppi = 0;
    int pred_gppi = 0;
    int error = 0;  // |pred - true|
    double score = 0.0;
};

struct ScoreReport {
    std::string method;
    std::vector<ScoreRow> rows;  // sorted by volume_id
    double mean_score = 0.0;
    double std_score = 0.0;  // population std across bones
    double sum_score = 0.0;
    double mae = 0.0;
};

ScoreReport evaluate_predictions(const std::vector<PredictionRow>& preds,
                                 const std::vector<TruthRow>& truths);

double mae_of(const std::vector<int>& diffs);

double mean_of(const std::vector<double>& xs);
double population_std(const std::vector<double>& xs);
double sample_std(const std::vector<double>& xs);  // n-1 denominator

// Descending by sum of scores; ties broken by lower MAE, then method id.
std::vector<ScoreReport> rank_teams(std::vector<ScoreReport> reports);

struct FoldAssignment {
    int k = 0;
    std::vector<std::string> ids;     // all ids, sorted
    std::vector<int> fold_of;         // parallel to ids
    std::vector<std::string> strata;  // parallel to ids

    int fold(const std::string& id) const;
};

// Seeded shuffle within each stratum, then round-robin assignment with the
// fold cursor carried across strata so totals stay balanced. Strata smaller
// than k are pooled into one group.
FoldAssignment kfold_split(const std::vector<std::pair<std::string, std::string>>& ids_with_strata,
                           int k, std::uint64_t seed);

struct CvAggregate {
    double mean = 0.0;
    double std_dev = 0.0;  // population std across folds
    bool single_fold = false;
};

CvAggregate aggregate_cv(const std::vector<double>& fold_scores);

// CSV / report I/O (fixed dialect; see csv.hpp).
std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path);
void write_predictions_csv(const std::filesystem::path& path, const std::vector<PredictionRow>& preds);
std::vector<TruthRow> read_truth_csv(const std::filesystem::path& path);
void write_truth_csv(const std::filesystem::path& path, const std::vector<TruthRow>& truths);
void write_report_csv(const std::filesystem::path& path, const ScoreReport& report);
void write_summary_csv(const std::filesystem::path& path, const std::vector<ScoreReport>& reports);
std::string leaderboard_text(const std::vector<ScoreReport>& ranked);

}  // namespace gpp
