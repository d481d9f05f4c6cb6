#include "gpp/evalrank.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <stdexcept>

#include "gpp/common.hpp"
#include "gpp/csv.hpp"
#include "gpp/rng.hpp"

namespace gpp {

double normal_ccdf(double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("normal_ccdf: non-finite input");
    // 0.5 * erfc(x / sqrt(2)); erfc keeps absolute error far below the 1e-7
    // contract across the whole range.
    return 0.5 * std::erfc(x * 0.7071067811865475244);
}

double plane_score(int pred, int truth) {
    const double e = std::abs(pred - truth);
    return 2.0 * normal_ccdf(e / 3.0);
}

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) throw std::invalid_argument("mean_of: empty input");
    double s = 0.0;
    for (const double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

namespace {

double sum_sq_dev(const std::vector<double>& xs) {
    const double m = mean_of(xs);
    double s = 0.0;
    for (const double x : xs) s += (x - m) * (x - m);
    return s;
}

}  // namespace

double population_std(const std::vector<double>& xs) {
    return std::sqrt(sum_sq_dev(xs) / static_cast<double>(xs.size()));
}

double sample_std(const std::vector<double>& xs) {
    if (xs.size() < 2) throw std::invalid_argument("sample_std: needs at least two values");
    return std::sqrt(sum_sq_dev(xs) / static_cast<double>(xs.size() - 1));
}

double mae_of(const std::vector<int>& diffs) {
    if (diffs.empty()) throw std::invalid_argument("mae_of: empty input");
    double s = 0.0;
    for (const int d : diffs) s += std::abs(d);
    return s / static_cast<double>(diffs.size());
}

ScoreReport evaluate_predictions(const std::vector<PredictionRow>& preds,
                                 const std::vector<TruthRow>& truths) {
    std::map<std::string, int> truth_by_id;
    for (const auto& t : truths) {
        if (!truth_by_id.emplace(t.volume_id, t.gppi).second)
            throw InputError("duplicate truth id: " + t.volume_id);
    }

    ScoreReport report;
    std::set<std::string> seen;
    for (const auto& p : preds) {
        if (!seen.insert(p.volume_id).second)
            throw InputError("duplicate prediction id: " + p.volume_id);
        const auto it = truth_by_id.find(p.volume_id);
        if (it == truth_by_id.end())
            throw InputError("prediction without matching truth: " + p.volume_id);
        if (report.method.empty()) report.method = p.method;
        ScoreRow row;
        row.volume_id = p.volume_id;
        row.true_gppi = it->second;
        row.pred_gppi = p.gppi_pred;
        row.error = std::abs(row.pred_gppi - row.true_gppi);
        row.score = plane_score(row.pred_gppi, row.true_gppi);
        report.rows.push_back(std::move(row));
    }
    if (report.rows.empty()) throw InputError("no predictions to evaluate");

    std::sort(report.rows.begin(), report.rows.end(),
              [](const ScoreRow& a, const ScoreRow& b) { return a.volume_id < b.volume_id; });

    std::vector<double> scores;
    double err_sum = 0.0;
    for (const auto& row : report.rows) {
        scores.push_back(row.score);
        report.sum_score += row.score;
        err_sum += row.error;
    }
    report.mean_score = mean_of(scores);
    report.std_score = population_std(scores);
    report.mae = err_sum / static_cast<double>(report.rows.size());
    return report;
}

std::vector<ScoreReport> rank_teams(std::vector<ScoreReport> reports) {
    if (reports.empty()) throw std::invalid_argument("rank_teams: no reports");
    std::stable_sort(reports.begin(), reports.end(), [](const ScoreReport& a, const ScoreReport& b) {
        if (a.sum_score != b.sum_score) return a.sum_score > b.sum_score;
        if (a.mae != b.mae) return a.mae < b.mae;
        return a.method < b.method;
    });
    return reports;
}

int FoldAssignment::fold(const std::string& id) const {
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (ids[i] == id) return fold_of[i];
    throw InputError("id not in fold assignment: " + id);
}

FoldAssignment kfold_split(const std::vector<std::pair<std::string, std::string>>& ids_with_strata,
                           int k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("kfold_split: k must be >= 2");
    if (ids_with_strata.empty()) throw std::invalid_argument("kfold_split: no ids");

    std::map<std::string, std::vector<std::string>> by_stratum;
    for (const auto& [id, stratum] : ids_with_strata) by_stratum[stratum].push_back(id);

    // Pool everything when any stratum is too small for a per-stratum split.
    bool pool = false;
    for (const auto& [stratum, ids] : by_stratum)
        if (static_cast<int>(ids.size()) < k) pool = true;
    if (pool) {
        std::vector<std::string> all;
        for (const auto& [stratum, ids] : by_stratum)
            all.insert(all.end(), ids.begin(), ids.end());
        by_stratum.clear();
        by_stratum[""] = std::move(all);
    }

    FoldAssignment fa;
    fa.k = k;
    std::map<std::string, std::pair<int, std::string>> assignment;  // id -> (fold, stratum)
    int cursor = 0;
    for (auto& [stratum, ids] : by_stratum) {
        std::sort(ids.begin(), ids.end());
        Rng rng(derive_seed(seed, "kfold:" + stratum));
        rng.shuffle(ids);
        for (const auto& id : ids) {
            if (!assignment.emplace(id, std::make_pair(cursor % k, stratum)).second)
                throw InputError("duplicate id in kfold_split: " + id);
            ++cursor;
        }
    }
    for (const auto& [id, fs] : assignment) {
        fa.ids.push_back(id);
        fa.fold_of.push_back(fs.first);
        fa.strata.push_back(fs.second);
    }
    return fa;
}

CvAggregate aggregate_cv(const std::vector<double>& fold_scores) {
    if (fold_scores.empty()) throw std::invalid_argument("aggregate_cv: no fold scores");
    CvAggregate agg;
    agg.mean = mean_of(fold_scores);
    if (fold_scores.size() == 1) {
        agg.std_dev = 0.0;
        agg.single_fold = true;
    } else {
        agg.std_dev = population_std(fold_scores);
    }
    return agg;
}

namespace {

std::string fmt(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return std::string(buf);
}

}  // namespace

std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path) {
    const auto table = read_csv(path);
    const int c_id = table.require_column("volume_id");
    const int c_pred = table.require_column("gppi_pred");
    const int c_method = table.column("method");
    const int c_model = table.column("model_id");
    std::vector<PredictionRow> preds;
    for (const auto& row : table.rows) {
        PredictionRow p;
        p.volume_id = row[c_id];
        try {
            p.gppi_pred = std::stoi(row[c_pred]);
        } catch (const std::exception&) {
            throw InputError("bad gppi_pred for " + p.volume_id + " in " + path.string());
        }
        if (c_method >= 0) p.method = row[c_method];
        if (c_model >= 0) p.model_id = row[c_model];
        preds.push_back(std::move(p));
    }
    return preds;
}

void write_predictions_csv(const std::filesystem::path& path, const std::vector<PredictionRow>& preds) {
    CsvTable table;
    table.header = {"volume_id", "gppi_pred", "method", "model_id"};
    for (const auto& p : preds)
        table.rows.push_back({p.volume_id, std::to_string(p.gppi_pred), p.method, p.model_id});
    write_csv(path, table);
}

std::vector<TruthRow> read_truth_csv(const std::filesystem::path& path) {
    const auto table = read_csv(path);
    const int c_id = table.require_column("volume_id");
    const int c_gppi = table.require_column("gppi");
    const int c_study = table.column("study");
    std::vector<TruthRow> truths;
    for (const auto& row : table.rows) {
        TruthRow t;
        t.volume_id = row[c_id];
        try {
            t.gppi = std::stoi(row[c_gppi]);
        } catch (const std::exception&) {
            throw InputError("bad gppi for " + t.volume_id + " in " + path.string());
        }
        if (c_study >= 0) t.study = row[c_study];
        truths.push_back(std::move(t));
    }
    return truths;
}

void write_truth_csv(const std::filesystem::path& path, const std::vector<TruthRow>& truths) {
    CsvTable table;
    table.header = {"volume_id", "gppi", "study"};
    for (const auto& t : truths)
        table.rows.push_back({t.volume_id, std::to_string(t.gppi), t.study});
    write_csv(path, table);
}

void write_report_csv(const std::filesystem::path& path, const ScoreReport& report) {
    CsvTable table;
    table.header = {"volume_id", "true_gppi", "pred_gppi", "error", "score"};
    for (const auto& row : report.rows)
        table.rows.push_back({row.volume_id, std::to_string(row.true_gppi),
                              std::to_string(row.pred_gppi), std::to_string(row.error),
                              fmt(row.score)});
    write_csv(path, table);
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<ScoreReport>& reports) {
    CsvTable table;
    table.header = {"method", "mean_score", "std_score", "sum_score", "mae"};
    for (const auto& r : reports)
        table.rows.push_back({r.method, fmt(r.mean_score), fmt(r.std_score), fmt(r.sum_score),
                              fmt(r.mae)});
    write_csv(path, table);
}

std::string leaderboard_text(const std::vector<ScoreReport>& ranked) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-4s %-16s %10s %10s %10s %8s\n", "rank", "method",
                  "mean", "std", "sum", "mae");
    out += line;
    int rank = 1;
    for (const auto& r : ranked) {
        std::snprintf(line, sizeof(line), "%-4d %-16s %10.3f %10.3f %10.3f %8.2f\n", rank++,
                      r.method.c_str(), r.mean_score, r.std_score, r.sum_score, r.mae);
        out += line;
    }
    return out;
}

}  // namespace gpp
