#include "dtltune/report.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace dtltune {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kW = 640, kH = 400, kPad = 48;
const char* kColors[] = {"#2166ac", "#b2182b", "#1a9850", "#762a83", "#e08214"};

struct Range {
    double lo = 0, hi = 1;
    void update(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    static Range of(const std::vector<XySeries>& series, bool useX) {
        Range r{std::numeric_limits<double>::max(), std::numeric_limits<double>::lowest()};
        for (const auto& s : series)
            for (double v : (useX ? s.x : s.y)) {
                r.lo = std::min(r.lo, v);
                r.hi = std::max(r.hi, v);
            }
        if (r.lo > r.hi) r = {0, 1};
        if (r.hi == r.lo) r.hi = r.lo + 1;
        return r;
    }
    double px(double v, double lenPx) const { return (v - lo) / (hi - lo) * lenPx; }
};

std::ofstream openOut(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << std::setprecision(10);
    return os;
}

void svgHeader(std::ofstream& os, const std::string& title, int w = kW, int h = kH) {
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
       << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
       << title << "</text>\n";
}

void axes(std::ofstream& os, int w = kW, int h = kH) {
    os << "<line x1=\"" << kPad << "\" y1=\"" << h - kPad << "\" x2=\"" << w - kPad / 2
       << "\" y2=\"" << h - kPad << "\" stroke=\"black\"/>\n"
       << "<line x1=\"" << kPad << "\" y1=\"" << h - kPad << "\" x2=\"" << kPad << "\" y2=\""
       << kPad / 2 << "\" stroke=\"black\"/>\n";
}

void axisLabels(std::ofstream& os, const Range& rx, const Range& ry, int w = kW, int h = kH) {
    os << std::setprecision(4);
    os << "<text x=\"" << kPad << "\" y=\"" << h - kPad + 16 << "\" font-size=\"10\">" << rx.lo
       << "</text>\n"
       << "<text x=\"" << w - kPad / 2 << "\" y=\"" << h - kPad + 16
       << "\" text-anchor=\"end\" font-size=\"10\">" << rx.hi << "</text>\n"
       << "<text x=\"" << kPad - 4 << "\" y=\"" << h - kPad
       << "\" text-anchor=\"end\" font-size=\"10\">" << ry.lo << "</text>\n"
       << "<text x=\"" << kPad - 4 << "\" y=\"" << kPad / 2 + 8
       << "\" text-anchor=\"end\" font-size=\"10\">" << ry.hi << "</text>\n";
    os << std::setprecision(10);
}

}   // namespace

void svgLineChart(const std::string& path, const std::string& title,
                  const std::vector<XySeries>& series) {
    auto os = openOut(path);
    svgHeader(os, title);
    axes(os);
    const Range rx = Range::of(series, true), ry = Range::of(series, false);
    const double pw = kW - 1.5 * kPad, ph = kH - 1.5 * kPad;
    int ci = 0;
    for (const auto& s : series) {
        os << "<polyline fill=\"none\" stroke=\"" << kColors[ci % 5] << "\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            os << kPad + rx.px(s.x[i], pw) << ',' << (kH - kPad) - ry.px(s.y[i], ph) << ' ';
        os << "\"/>\n";
        os << "<text x=\"" << kW - kPad / 2 << "\" y=\"" << kPad / 2 + 14 * ci
           << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << kColors[ci % 5] << "\">"
           << s.name << "</text>\n";
        ++ci;
    }
    axisLabels(os, rx, ry);
    os << "</svg>\n";
}

void svgScatter(const std::string& path, const std::string& title,
                const std::vector<XySeries>& series) {
    auto os = openOut(path);
    svgHeader(os, title);
    axes(os);
    const Range rx = Range::of(series, true), ry = Range::of(series, false);
    const double pw = kW - 1.5 * kPad, ph = kH - 1.5 * kPad;
    int ci = 0;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size(); ++i)
            os << "<circle cx=\"" << kPad + rx.px(s.x[i], pw) << "\" cy=\""
               << (kH - kPad) - ry.px(s.y[i], ph) << "\" r=\"2.5\" fill=\"" << kColors[ci % 5]
               << "\" fill-opacity=\"0.7\"/>\n";
        os << "<text x=\"" << kW - kPad / 2 << "\" y=\"" << kPad / 2 + 14 * ci
           << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << kColors[ci % 5] << "\">"
           << s.name << "</text>\n";
        ++ci;
    }
    axisLabels(os, rx, ry);
    os << "</svg>\n";
}

void svgHistogram(const std::string& path, const std::string& title, double binWidth,
                  const std::vector<std::pair<std::string, std::vector<long>>>& panels) {
    const int h = kH * int(panels.size());
    auto os = openOut(path);
    svgHeader(os, title, kW, h);
    long maxCount = 1;
    std::size_t maxBins = 1;
    for (const auto& [_, counts] : panels) {
        maxBins = std::max(maxBins, counts.size());
        for (long c : counts) maxCount = std::max(maxCount, c);
    }
    int panelIdx = 0;
    for (const auto& [name, counts] : panels) {
        const int top = kH * panelIdx;
        const double pw = kW - 1.5 * kPad, ph = kH - 1.5 * kPad;
        os << "<text x=\"" << kW - kPad / 2 << "\" y=\"" << top + kPad / 2
           << "\" text-anchor=\"end\" font-size=\"11\">" << name << "</text>\n";
        os << "<line x1=\"" << kPad << "\" y1=\"" << top + kH - kPad << "\" x2=\""
           << kW - kPad / 2 << "\" y2=\"" << top + kH - kPad << "\" stroke=\"black\"/>\n";
        const double bw = pw / double(maxBins);
        for (std::size_t b = 0; b < counts.size(); ++b) {
            const double bh = ph * double(counts[b]) / double(maxCount);
            os << "<rect x=\"" << kPad + bw * double(b) << "\" y=\"" << top + kH - kPad - bh
               << "\" width=\"" << bw * 0.9 << "\" height=\"" << bh << "\" fill=\""
               << kColors[panelIdx % 5] << "\"/>\n";
        }
        os << "<text x=\"" << kPad << "\" y=\"" << top + kH - kPad + 16
           << "\" font-size=\"10\">0</text>\n"
           << "<text x=\"" << kW - kPad / 2 << "\" y=\"" << top + kH - kPad + 16
           << "\" text-anchor=\"end\" font-size=\"10\">" << binWidth * double(maxBins)
           << "</text>\n";
        ++panelIdx;
    }
    os << "</svg>\n";
}

void writeEvalSummaryCsv(const std::string& path, const EvalSummary& s) {
    auto os = openOut(path);
    os << "sample_size,successes,success_rate,max_steps,bin_width\n";
    os << s.sampleSize << ',' << s.successes << ',' << s.successRate << ',' << s.maxSteps << ','
       << s.histogramBinWidth << '\n';
    os << "bin_start,count\n";
    for (std::size_t b = 0; b < s.histogram.size(); ++b)
        os << b * std::size_t(s.histogramBinWidth) << ',' << s.histogram[b] << '\n';
    os << "under_steps,fraction\n";
    for (std::size_t i = 0; i < s.underSteps.size(); ++i)
        os << s.underSteps[i] << ',' << s.underFraction[i] << '\n';
}

void writeEvalSummaryJson(const std::string& path, const EvalSummary& s) {
    json j;
    j["sample_size"] = s.sampleSize;
    j["successes"] = s.successes;
    j["success_rate"] = s.successRate;
    j["max_steps"] = s.maxSteps;
    j["histogram_bin_width"] = s.histogramBinWidth;
    j["histogram"] = s.histogram;
    j["steps_per_run"] = s.stepsPerRun;
    for (std::size_t i = 0; i < s.underSteps.size(); ++i)
        j["under_steps"][std::to_string(s.underSteps[i])] = s.underFraction[i];
    json pts = json::array();
    for (const auto& p : s.solutionPoints)
        pts.push_back({{"t1_amp", p.t1Amp},
                       {"t2_amp", p.t2Amp},
                       {"t2_phase", p.t2Phase},
                       {"t3_amp", p.t3Amp},
                       {"t3_phase", p.t3Phase}});
    j["solution_points"] = pts;
    auto os = openOut(path);
    os << j.dump(2) << '\n';
}

void writeSolutionBandCsv(const std::string& path, const std::vector<SolutionBandRow>& rows) {
    auto os = openOut(path);
    os << "label,t1_amp,t2_amp,t2_phase,t3_amp,t3_phase\n";
    for (const auto& r : rows)
        os << r.label << ',' << r.settings.t1Amp << ',' << r.settings.t2Amp << ','
           << r.settings.t2Phase << ',' << r.settings.t3Amp << ',' << r.settings.t3Phase << '\n';
}

void writeTrajectoryCsv(const std::string& path, const Trajectory& t) {
    auto os = openOut(path);
    os << "step,t1_amp,t2_amp,t2_phase,t3_amp,t3_phase,reward,transmission\n";
    os << 0 << ',' << t.startPoint.t1Amp << ',' << t.startPoint.t2Amp << ','
       << t.startPoint.t2Phase << ',' << t.startPoint.t3Amp << ',' << t.startPoint.t3Phase
       << ",," << t.startTransmission << '\n';
    int k = 1;
    for (const auto& s : t.steps)
        os << k++ << ',' << s.controls.t1Amp << ',' << s.controls.t2Amp << ','
           << s.controls.t2Phase << ',' << s.controls.t3Amp << ',' << s.controls.t3Phase << ','
           << s.reward << ',' << s.transmission << '\n';
}

void writePhaseSpaceCsv(const std::string& path, int monitor,
                        const std::vector<std::pair<double, double>>& pts) {
    auto os = openOut(path);
    os << "monitor,psi,delta\n";
    for (const auto& [psi, delta] : pts) os << monitor << ',' << psi << ',' << delta << '\n';
}

void writePhaseComparison(const std::string& dir, const PhaseSpaceComparison& cmp) {
    for (int m = 1; m <= kMonitorCount; ++m) {
        writePhaseSpaceCsv(dir + "/phase_space_rl_" + std::to_string(m) + ".csv", m,
                           cmp.rlDumps[m - 1]);
        writePhaseSpaceCsv(dir + "/phase_space_expert_" + std::to_string(m) + ".csv", m,
                           cmp.expertDumps[m - 1]);
        std::vector<XySeries> sc;
        XySeries rl{"rl", {}, {}}, ex{"expert", {}, {}};
        for (auto& p : cmp.rlDumps[m - 1]) {
            rl.x.push_back(p.first);
            rl.y.push_back(p.second);
        }
        for (auto& p : cmp.expertDumps[m - 1]) {
            ex.x.push_back(p.first);
            ex.y.push_back(p.second);
        }
        sc.push_back(ex);
        sc.push_back(rl);
        svgScatter(dir + "/phase_space_" + std::to_string(m) + ".svg",
                   "phase space at monitor " + std::to_string(m), sc);
    }
    auto os = openOut(dir + "/phase_space_stats.csv");
    os << "monitor,solution,alive_fraction,psi_std,delta_std\n";
    for (int m = 0; m < kMonitorCount; ++m) {
        os << m + 1 << ",expert," << cmp.expertStats[m].aliveFraction << ','
           << cmp.expertStats[m].psiStd << ',' << cmp.expertStats[m].deltaStd << '\n';
        os << m + 1 << ",rl," << cmp.rlStats[m].aliveFraction << ',' << cmp.rlStats[m].psiStd
           << ',' << cmp.rlStats[m].deltaStd << '\n';
    }
}

std::vector<EpisodeRow> readEpisodeCsv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::vector<EpisodeRow> rows;
    std::string line;
    std::getline(is, line);   // header
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        EpisodeRow r;
        std::istringstream ls(line);
        std::string tok;
        std::getline(ls, tok, ','); r.episode = std::stol(tok);
        std::getline(ls, tok, ','); r.worker = std::stoi(tok);
        std::getline(ls, tok, ','); r.length = std::stoi(tok);
        std::getline(ls, tok, ','); r.totalReward = std::stod(tok);
        std::getline(ls, tok, ','); r.success = tok == "1";
        std::getline(ls, tok, ','); r.epsilon = std::stod(tok);
        std::getline(ls, tok, ','); r.wallMs = std::stod(tok);
        rows.push_back(r);
    }
    return rows;
}

namespace {

std::vector<long> histCounts(const std::vector<double>& vals, double binWidth, double maxVal) {
    std::vector<long> counts(std::size_t(maxVal / binWidth) + 1, 0);
    for (double v : vals)
        counts[std::min(counts.size() - 1, std::size_t(std::max(0.0, v) / binWidth))]++;
    return counts;
}

}   // namespace

std::vector<std::string> emitRunReport(const std::string& runDir, const std::string& outDir,
                                       long roundEpisodes) {
    std::vector<std::string> missing;
    const std::string episodesPath = runDir + "/episodes.csv";
    if (!fs::exists(episodesPath)) {
        missing.push_back(episodesPath);
        return missing;
    }
    fs::create_directories(outDir);
    auto rows = readEpisodeCsv(episodesPath);
    std::sort(rows.begin(), rows.end(),
              [](const EpisodeRow& a, const EpisodeRow& b) { return a.episode < b.episode; });

    {
        XySeries len{"episode length", {}, {}}, rew{"total reward", {}, {}};
        auto lenCsv = openOut(outDir + "/episode_length.csv");
        auto rewCsv = openOut(outDir + "/reward.csv");
        lenCsv << "episode,length\n";
        rewCsv << "episode,total_reward\n";
        for (const auto& r : rows) {
            len.x.push_back(double(r.episode));
            len.y.push_back(double(r.length));
            rew.x.push_back(double(r.episode));
            rew.y.push_back(r.totalReward);
            lenCsv << r.episode << ',' << r.length << '\n';
            rewCsv << r.episode << ',' << r.totalReward << '\n';
        }
        svgLineChart(outDir + "/episode_length.svg", "training episode length", {len});
        svgLineChart(outDir + "/reward.svg", "training episode reward", {rew});
    }

    // round-over-round histograms (first vs last logging epoch)
    if (!rows.empty()) {
        const long nRounds = std::max(1L, (long(rows.size()) + roundEpisodes - 1) / roundEpisodes);
        auto roundOf = [&](std::size_t idx) { return long(idx) / roundEpisodes; };
        std::vector<double> firstLen, lastLen, firstRew, lastRew;
        double maxLen = 1;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            maxLen = std::max(maxLen, double(rows[i].length));
            if (roundOf(i) == 0) {
                firstLen.push_back(double(rows[i].length));
                firstRew.push_back(rows[i].totalReward);
            }
            if (roundOf(i) == nRounds - 1) {
                lastLen.push_back(double(rows[i].length));
                lastRew.push_back(rows[i].totalReward);
            }
        }
        const double binW = 50.0;
        svgHistogram(outDir + "/episode_length_rounds.svg",
                     "episode length: first round (top) vs final round (bottom)", binW,
                     {{"first round", histCounts(firstLen, binW, maxLen)},
                      {"final round", histCounts(lastLen, binW, maxLen)}});
        auto csv = openOut(outDir + "/episode_length_rounds.csv");
        csv << "round,bin_start,count\n";
        auto h1 = histCounts(firstLen, binW, maxLen);
        auto h2 = histCounts(lastLen, binW, maxLen);
        for (std::size_t b = 0; b < h1.size(); ++b) csv << "first," << b * 50 << ',' << h1[b] << '\n';
        for (std::size_t b = 0; b < h2.size(); ++b) csv << "final," << b * 50 << ',' << h2[b] << '\n';

        // reward histograms share the panel layout
        double minRew = 0, maxRew = 1;
        for (const auto& r : rows) {
            minRew = std::min(minRew, r.totalReward);
            maxRew = std::max(maxRew, r.totalReward);
        }
        auto shift = [&](const std::vector<double>& v) {
            std::vector<double> out;
            out.reserve(v.size());
            for (double x : v) out.push_back(x - minRew);
            return out;
        };
        const double rewBin = std::max(1.0, (maxRew - minRew) / 40.0);
        svgHistogram(outDir + "/reward_rounds.svg",
                     "episode reward: first round (top) vs final round (bottom)", rewBin,
                     {{"first round", histCounts(shift(firstRew), rewBin, maxRew - minRew)},
                      {"final round", histCounts(shift(lastRew), rewBin, maxRew - minRew)}});
    }

    // optional projections from evaluation artifacts
    const std::string bandPath = runDir + "/solution_band.csv";
    if (fs::exists(bandPath)) {
        std::ifstream is(bandPath);
        std::string line;
        std::getline(is, line);
        XySeries rl{"rl", {}, {}}, design{"design", {}, {}};
        std::vector<std::array<double, 5>> vals;
        std::vector<std::string> labels;
        while (std::getline(is, line)) {
            std::istringstream ls(line);
            std::string label, tok;
            std::getline(ls, label, ',');
            std::array<double, 5> v{};
            for (int i = 0; i < 5; ++i) {
                std::getline(ls, tok, ',');
                v[i] = std::stod(tok);
            }
            labels.push_back(label);
            vals.push_back(v);
        }
        const std::array<std::pair<int, int>, 3> proj = {{{0, 1}, {0, 2}, {1, 2}}};
        const std::array<std::string, 5> names = {"t1_amp", "t2_amp", "t2_phase", "t3_amp",
                                                  "t3_phase"};
        for (auto [a, b] : proj) {
            XySeries prl{"rl", {}, {}}, pdes{"design", {}, {}};
            for (std::size_t i = 0; i < vals.size(); ++i) {
                auto& s = labels[i] == "design" ? pdes : prl;
                s.x.push_back(vals[i][std::size_t(a)]);
                s.y.push_back(vals[i][std::size_t(b)]);
            }
            svgScatter(outDir + "/solution_band_" + names[std::size_t(a)] + "_" +
                           names[std::size_t(b)] + ".svg",
                       "solution band: " + names[std::size_t(a)] + " vs " + names[std::size_t(b)],
                       {prl, pdes});
        }
    }
    return missing;
}

}   // namespace dtltune
