#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace recoverlab {

/// Line-delimited JSON records.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  void write(const nlohmann::json& record);

 private:
  std::ofstream out_;
};

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

}  // namespace recoverlab
