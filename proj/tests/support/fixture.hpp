#pragma once

// Reader for the checked-in 20-sample accuracy fixture and its hand-counted table.

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#ifndef SMTL_FIXTURE_DIR
#error "SMTL_FIXTURE_DIR must point at tests/fixtures"
#endif

namespace fixture {

struct Samples {
  std::vector<std::string> classes{"AU1", "AU2", "AU4", "AU6", "AU12"};
  std::vector<std::vector<std::uint8_t>> truth, predicted;
};

struct ExpectedRow {
  std::string name;
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  double accuracy = 0.0;
  std::optional<double> recall;
};

inline std::vector<std::vector<std::string>> read_csv(const std::string& file) {
  std::ifstream is(std::string(SMTL_FIXTURE_DIR) + "/" + file);
  if (!is) throw std::runtime_error("cannot open fixture " + file);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (line.back() == ',') fields.emplace_back();
    rows.push_back(std::move(fields));
  }
  return rows;
}

inline std::vector<std::uint8_t> bits(const std::string& s) {
  std::vector<std::uint8_t> out;
  for (char c : s) out.push_back(c == '1');
  return out;
}

inline Samples load_samples() {
  Samples s;
  for (const auto& r : read_csv("accuracy_20.csv")) {
    s.truth.push_back(bits(r.at(1)));
    s.predicted.push_back(bits(r.at(2)));
  }
  return s;
}

inline std::vector<ExpectedRow> load_expected() {
  std::vector<ExpectedRow> out;
  for (const auto& r : read_csv("accuracy_20_expected.csv")) {
    ExpectedRow e;
    e.name = r.at(0);
    e.tp = std::stoul(r.at(1));
    e.tn = std::stoul(r.at(2));
    e.fp = std::stoul(r.at(3));
    e.fn = std::stoul(r.at(4));
    e.accuracy = std::stod(r.at(5));
    if (!r.at(6).empty()) e.recall = std::stod(r.at(6));
    out.push_back(e);
  }
  return out;
}

}  // namespace fixture
