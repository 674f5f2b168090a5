#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ispl/metrics.hpp"
#include "ispl/model.hpp"
#include "ispl/train.hpp"

namespace ispl {

enum class Protocol { S2S, S2R, R2R };

Protocol protocol_from_string(const std::string& s);
std::string protocol_to_string(Protocol p);

struct PerImageMetrics {
    std::string image_id;
    double psnr = 0.0;
    double ssim = 0.0;
    double ms_ssim = 0.0;
    double fed = 0.0;
    double lle = 0.0;  // NaN when the detector failed
    double lpips_like = 0.0;
    std::optional<double> niqe;
};

struct Aggregates {
    double psnr = 0.0;
    double ssim = 0.0;
    double ms_ssim = 0.0;
    double fed = 0.0;
    double lle = 0.0;
    double lpips_like = 0.0;
    double fid = 0.0;
    std::optional<double> niqe_external;
};

struct MetricReport {
    std::vector<PerImageMetrics> per_image;
    Aggregates aggregate;
    Protocol protocol = Protocol::S2S;
    std::string model_id;
    std::string dataset_id;
    int lle_excluded = 0;    // detector failures dropped from the mean
    int ms_ssim_scales = 5;  // flagged when reduced for small images
    bool fid_ridged = false;

    // Recomputes aggregate means from the per-image table (FID stays as-is;
    // it is distributional, not per-image).
    void recompute_aggregates();

    std::string to_json() const;
    static MetricReport from_json(const std::string& text);
    void save(const std::string& json_path) const;
    static MetricReport load(const std::string& json_path);
    void write_csv(const std::string& csv_path) const;

    // Merges external per-image NIQE scores (two-column CSV: image_id,score).
    void attach_niqe(const std::map<std::string, double>& scores);
};

std::map<std::string, double> read_niqe_csv(const std::string& path);

struct ProtocolOptions {
    std::string model_id;
    std::string dataset_id;
    std::optional<std::string> niqe_csv;
};

// Restores every LQ image with the frozen model, computes the metric triad
// against HQ and assembles the report. The protocol must be consistent with
// the checkpoint's training-domain tag (S2S/S2R need synthetic, R2R real).
MetricReport run_protocol(const IsplModel& model, const std::string& train_domain,
                          const PairProvider& test_set, Protocol protocol,
                          const FeatureExtractor& extractor, const LandmarkDetector& detector,
                          const ProtocolOptions& options = {});

// Mean over {FID, LPIPS} of the S2R/S2S ratio, as a multiplier.
double domain_gap(const MetricReport& s2s, const MetricReport& s2r);
// Mean over {FID, LPIPS} of (S2R - R2R)/S2R, as a percentage.
double r2r_gain(const MetricReport& s2r, const MetricReport& r2r);

}  // namespace ispl
