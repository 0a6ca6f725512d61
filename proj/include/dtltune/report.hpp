#ifndef DTLTUNE_REPORT_HPP
#define DTLTUNE_REPORT_HPP

#include <string>
#include <vector>

#include "dtltune/evalkit.hpp"

namespace dtltune {

// minimal SVG emission; every plot is also written as CSV next to it
struct XySeries {
    std::string name;
    std::vector<double> x, y;
};

void svgLineChart(const std::string& path, const std::string& title,
                  const std::vector<XySeries>& series);
void svgScatter(const std::string& path, const std::string& title,
                const std::vector<XySeries>& series);
void svgHistogram(const std::string& path, const std::string& title, double binWidth,
                  const std::vector<std::pair<std::string, std::vector<long>>>& panels);

// evaluation artifacts
void writeEvalSummaryCsv(const std::string& path, const EvalSummary& s);
void writeEvalSummaryJson(const std::string& path, const EvalSummary& s);
void writeSolutionBandCsv(const std::string& path, const std::vector<SolutionBandRow>& rows);
void writeTrajectoryCsv(const std::string& path, const Trajectory& t);
void writePhaseSpaceCsv(const std::string& path, int monitor,
                        const std::vector<std::pair<double, double>>& pts);
void writePhaseComparison(const std::string& dir, const PhaseSpaceComparison& cmp);

// episode-log reporting
struct EpisodeRow {
    long episode = 0;
    int worker = 0;
    int length = 0;
    double totalReward = 0;
    bool success = false;
    double epsilon = 0;
    double wallMs = 0;
};
std::vector<EpisodeRow> readEpisodeCsv(const std::string& path);

// emits curves, round-over-round histograms, and projections into outDir;
// returns the files it could not find (empty on full success)
std::vector<std::string> emitRunReport(const std::string& runDir, const std::string& outDir,
                                       long roundEpisodes);

}   // namespace dtltune

#endif
