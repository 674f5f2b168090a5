#include "ispl/report.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "ispl/degradation.hpp"
#include "json.hpp"

namespace ispl {

Protocol protocol_from_string(const std::string& s) {
    if (s == "s2s" || s == "S2S") return Protocol::S2S;
    if (s == "s2r" || s == "S2R") return Protocol::S2R;
    if (s == "r2r" || s == "R2R") return Protocol::R2R;
    throw ValidationError("unknown protocol: " + s);
}

std::string protocol_to_string(Protocol p) {
    switch (p) {
        case Protocol::S2S: return "S2S";
        case Protocol::S2R: return "S2R";
        case Protocol::R2R: return "R2R";
    }
    throw ValidationError("invalid protocol enum");
}

namespace {

double mean_skipping_nan(const std::vector<double>& v, int* excluded = nullptr) {
    double acc = 0.0;
    int used = 0, skipped = 0;
    for (double x : v) {
        if (std::isnan(x)) {
            ++skipped;
        } else {
            acc += x;
            ++used;
        }
    }
    if (excluded) *excluded = skipped;
    return used ? acc / used : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

void MetricReport::recompute_aggregates() {
    std::vector<double> psnr, ssim, msssim, fed, lle, lpips, niqe;
    for (const auto& r : per_image) {
        psnr.push_back(r.psnr);
        ssim.push_back(r.ssim);
        msssim.push_back(r.ms_ssim);
        fed.push_back(r.fed);
        lle.push_back(r.lle);
        lpips.push_back(r.lpips_like);
        if (r.niqe) niqe.push_back(*r.niqe);
    }
    aggregate.psnr = mean_skipping_nan(psnr);
    aggregate.ssim = mean_skipping_nan(ssim);
    aggregate.ms_ssim = mean_skipping_nan(msssim);
    aggregate.fed = mean_skipping_nan(fed);
    aggregate.lle = mean_skipping_nan(lle, &lle_excluded);
    aggregate.lpips_like = mean_skipping_nan(lpips);
    if (!niqe.empty()) aggregate.niqe_external = mean_skipping_nan(niqe);
}

std::string MetricReport::to_json() const {
    nlohmann::json j;
    j["protocol"] = protocol_to_string(protocol);
    j["model_id"] = model_id;
    j["dataset_id"] = dataset_id;
    j["lle_excluded"] = lle_excluded;
    j["ms_ssim_scales"] = ms_ssim_scales;
    j["fid_ridged"] = fid_ridged;
    nlohmann::json agg;
    agg["psnr"] = aggregate.psnr;
    agg["ssim"] = aggregate.ssim;
    agg["ms_ssim"] = aggregate.ms_ssim;
    agg["fed"] = aggregate.fed;
    agg["lle"] = aggregate.lle;
    agg["lpips_like"] = aggregate.lpips_like;
    agg["fid"] = aggregate.fid;
    if (aggregate.niqe_external)
        agg["niqe_external"] = *aggregate.niqe_external;
    else
        agg["niqe_external"] = nullptr;
    j["aggregate"] = agg;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : per_image) {
        nlohmann::json row;
        row["image_id"] = r.image_id;
        row["psnr"] = r.psnr;
        row["ssim"] = r.ssim;
        row["ms_ssim"] = r.ms_ssim;
        row["fed"] = r.fed;
        if (std::isnan(r.lle))
            row["lle"] = nullptr;
        else
            row["lle"] = r.lle;
        row["lpips_like"] = r.lpips_like;
        if (r.niqe)
            row["niqe"] = *r.niqe;
        else
            row["niqe"] = nullptr;
        rows.push_back(row);
    }
    j["per_image"] = rows;
    return j.dump(2);
}

MetricReport MetricReport::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw ValidationError(std::string("metric report parse error: ") + e.what());
    }
    MetricReport r;
    r.protocol = protocol_from_string(j.at("protocol").get<std::string>());
    r.model_id = j.value("model_id", "");
    r.dataset_id = j.value("dataset_id", "");
    r.lle_excluded = j.value("lle_excluded", 0);
    r.ms_ssim_scales = j.value("ms_ssim_scales", 5);
    r.fid_ridged = j.value("fid_ridged", false);
    const auto& agg = j.at("aggregate");
    r.aggregate.psnr = agg.value("psnr", 0.0);
    r.aggregate.ssim = agg.value("ssim", 0.0);
    r.aggregate.ms_ssim = agg.value("ms_ssim", 0.0);
    r.aggregate.fed = agg.value("fed", 0.0);
    r.aggregate.lle = agg.value("lle", 0.0);
    r.aggregate.lpips_like = agg.value("lpips_like", 0.0);
    r.aggregate.fid = agg.value("fid", 0.0);
    if (agg.contains("niqe_external") && !agg["niqe_external"].is_null())
        r.aggregate.niqe_external = agg["niqe_external"].get<double>();
    if (j.contains("per_image"))
        for (const auto& row : j["per_image"]) {
            PerImageMetrics m;
            m.image_id = row.at("image_id").get<std::string>();
            m.psnr = row.value("psnr", 0.0);
            m.ssim = row.value("ssim", 0.0);
            m.ms_ssim = row.value("ms_ssim", 0.0);
            m.fed = row.value("fed", 0.0);
            if (row.contains("lle") && !row["lle"].is_null())
                m.lle = row["lle"].get<double>();
            else
                m.lle = std::numeric_limits<double>::quiet_NaN();
            m.lpips_like = row.value("lpips_like", 0.0);
            if (row.contains("niqe") && !row["niqe"].is_null())
                m.niqe = row["niqe"].get<double>();
            r.per_image.push_back(std::move(m));
        }
    return r;
}

void MetricReport::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << to_json() << "\n";
}

MetricReport MetricReport::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open report " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

void MetricReport::write_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "image_id,psnr,ssim,ms_ssim,fed,lle,lpips_like,niqe\n";
    for (const auto& r : per_image) {
        out << r.image_id << "," << r.psnr << "," << r.ssim << "," << r.ms_ssim << "," << r.fed
            << ",";
        if (std::isnan(r.lle))
            out << "";
        else
            out << r.lle;
        out << "," << r.lpips_like << ",";
        if (r.niqe) out << *r.niqe;
        out << "\n";
    }
}

void MetricReport::attach_niqe(const std::map<std::string, double>& scores) {
    for (auto& r : per_image) {
        auto it = scores.find(r.image_id);
        if (it != scores.end()) r.niqe = it->second;
    }
    recompute_aggregates();
}

std::map<std::string, double> read_niqe_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open NIQE csv " + path);
    std::map<std::string, double> scores;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto comma = line.find(',');
        check(comma != std::string::npos,
              "niqe csv: malformed line " + std::to_string(lineno) + " in " + path);
        const std::string id = line.substr(0, comma);
        if (lineno == 1 && (id == "image_id" || id == "id")) continue;  // optional header
        try {
            scores[id] = std::stod(line.substr(comma + 1));
        } catch (const std::exception&) {
            throw ValidationError("niqe csv: bad score on line " + std::to_string(lineno));
        }
    }
    return scores;
}

MetricReport run_protocol(const IsplModel& model, const std::string& train_domain,
                          const PairProvider& test_set, Protocol protocol,
                          const FeatureExtractor& extractor, const LandmarkDetector& detector,
                          const ProtocolOptions& options) {
    check(train_domain == "synthetic" || train_domain == "real",
          "run_protocol: train_domain must be 'synthetic' or 'real'");
    const bool needs_real = protocol == Protocol::R2R;
    check(needs_real == (train_domain == "real"),
          "run_protocol: protocol " + protocol_to_string(protocol) +
              " is inconsistent with a checkpoint trained on " + train_domain + " data");
    check(test_set.size() > 0, "run_protocol: empty test set");

    const int image_size = model.config().image_size;
    std::vector<ImageBatch> restored_list, hq_list;
    MetricReport report;
    report.protocol = protocol;
    report.model_id = options.model_id;
    report.dataset_id = options.dataset_id;

    for (int64_t i = 0; i < test_set.size(); ++i) {
        auto [lq, hq] = test_set.get(i);
        check(hq.height() == image_size && hq.width() == image_size,
              "run_protocol: HQ image size must equal the model resolution");
        if (lq.height() != image_size || lq.width() != image_size)
            lq = degrade::resample_bicubic(lq, image_size, image_size);
        restored_list.push_back(model.restore_dynamic(lq));
        hq_list.push_back(std::move(hq));
    }
    auto restored = ImageBatch::concat(restored_list);
    auto hq = ImageBatch::concat(hq_list);

    const auto psnr = metrics::psnr_per_image(restored, hq);
    const auto ssim = metrics::ssim_per_image(restored, hq);
    int scales = 5;
    const auto msssim = metrics::ms_ssim_per_image(restored, hq, &scales);
    const auto fed = metrics::fed_per_image(restored, hq, extractor);
    const auto lle = metrics::lle_per_image(restored, hq, detector);
    const auto lpips = metrics::lpips_like_per_image(restored, hq, extractor);

    for (int64_t i = 0; i < test_set.size(); ++i) {
        PerImageMetrics m;
        m.image_id = test_set.id(i);
        m.psnr = psnr[i];
        m.ssim = ssim[i];
        m.ms_ssim = msssim[i];
        m.fed = fed[i];
        m.lle = lle[i];
        m.lpips_like = lpips[i];
        report.per_image.push_back(std::move(m));
    }
    report.ms_ssim_scales = scales;
    report.aggregate.fid = metrics::fid(hq, restored, extractor, &report.fid_ridged);
    report.recompute_aggregates();
    if (options.niqe_csv) report.attach_niqe(read_niqe_csv(*options.niqe_csv));
    return report;
}

namespace {

void check_comparable(const MetricReport& a, const MetricReport& b, const char* what) {
    check(!a.model_id.empty() && a.model_id == b.model_id,
          std::string(what) + ": reports must come from the same model family (got '" +
              a.model_id + "' vs '" + b.model_id + "')");
}

}  // namespace

double domain_gap(const MetricReport& s2s, const MetricReport& s2r) {
    check_comparable(s2s, s2r, "domain_gap");
    check(s2s.aggregate.fid != 0.0 && s2s.aggregate.lpips_like != 0.0,
          "domain_gap: zero S2S denominator");
    const double fid_ratio = s2r.aggregate.fid / s2s.aggregate.fid;
    const double lpips_ratio = s2r.aggregate.lpips_like / s2s.aggregate.lpips_like;
    return 0.5 * (fid_ratio + lpips_ratio);
}

double r2r_gain(const MetricReport& s2r, const MetricReport& r2r) {
    check_comparable(s2r, r2r, "r2r_gain");
    check(s2r.aggregate.fid != 0.0 && s2r.aggregate.lpips_like != 0.0,
          "r2r_gain: zero S2R denominator");
    const double fid_gain = (s2r.aggregate.fid - r2r.aggregate.fid) / s2r.aggregate.fid;
    const double lpips_gain =
        (s2r.aggregate.lpips_like - r2r.aggregate.lpips_like) / s2r.aggregate.lpips_like;
    return 100.0 * 0.5 * (fid_gain + lpips_gain);
}

}  // namespace ispl
