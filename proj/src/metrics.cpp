#include "lpcgmn/metrics.hpp"
#include "lpcgmn/pyramid.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <sstream>

namespace lpcgmn {
namespace {

using json = nlohmann::json;

json number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return v;
}

std::string full(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string sig6(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

namespace metrics {

std::string to_json(const MetricReport& r) {
  json j = {{"mse", number(r.mse)},         {"nmse", number(r.nmse)},   {"rmse", number(r.rmse)},
            {"ssim", number(r.ssim)},       {"psnr", number(r.psnr)},   {"samples", r.samples},
            {"parameters", r.parameters},   {"flops", r.flops},         {"wall_seconds", number(r.wall_seconds)}};
  return j.dump(2);
}

std::string csv_header() { return "mse,nmse,rmse,ssim,psnr,samples,parameters,flops,wall_seconds"; }

std::string to_csv_row(const MetricReport& r) {
  std::ostringstream os;
  os << full(r.mse) << ',' << full(r.nmse) << ',' << full(r.rmse) << ',' << full(r.ssim) << ',' << full(r.psnr) << ','
     << r.samples << ',' << r.parameters << ',' << r.flops << ',' << full(r.wall_seconds);
  return os.str();
}

std::string to_table(const MetricReport& r) {
  std::ostringstream os;
  auto row = [&](const char* k, const std::string& v) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "  %-12s %s\n", k, v.c_str());
    os << buf;
  };
  row("NMSE", sig6(r.nmse));
  row("RMSE", sig6(r.rmse));
  row("MSE", sig6(r.mse));
  row("SSIM", sig6(r.ssim));
  row("PSNR [dB]", sig6(r.psnr));
  row("samples", std::to_string(r.samples));
  if (r.parameters) row("params", std::to_string(r.parameters));
  if (r.flops) row("FLOPs", sig6(static_cast<double>(r.flops)));
  row("wall [s]", sig6(r.wall_seconds));
  return os.str();
}

}  // namespace metrics

namespace pyramid {

std::string to_json(const BandReport& report) {
  json bands = json::array();
  for (const auto& b : report.bands) {
    bands.push_back({{"name", b.name},
                     {"rows", b.rows},
                     {"cols", b.cols},
                     {"mse", number(b.mse)},
                     {"ssim", number(b.ssim)},
                     {"psnr", number(b.psnr)},
                     {"histogram", {{"lo", b.hist_lo}, {"hi", b.hist_hi}, {"a", b.hist_a}, {"b", b.hist_b}}}});
  }
  json j = {{"levels", report.levels}, {"low_band_dominant", report.low_band_dominant()}, {"bands", bands}};
  return j.dump(2);
}

}  // namespace pyramid
}  // namespace lpcgmn
