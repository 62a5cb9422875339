#ifndef MEMGAME_REPORT_HPP
#define MEMGAME_REPORT_HPP

#include <fstream>
#include <string>
#include <vector>

namespace memgame {

// 17 significant digits: re-reading the text reproduces the double exactly,
// so identical runs emit byte-identical files.
std::string fmt17(double v);

class CsvWriter {
  public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);

    void row(const std::vector<std::string>& cells);

    static std::string cell(double v) { return fmt17(v); }
    static std::string cell(std::size_t v) { return std::to_string(v); }
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(bool v) { return v ? "1" : "0"; }
    static std::string cell(const std::string& v) { return v; }

  private:
    std::ofstream out_;
};

} // namespace memgame

#endif
