#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "polyqa/error.hpp"

namespace polyqa {

struct Question {
  std::string question_id;
  std::string lang;
  std::string text;

  bool operator==(const Question&) const = default;
};

// Question records use the key "question" for the text.
inline Question question_from_json(const nlohmann::json& j) {
  try {
    Question q{j.at("question_id").get<std::string>(), j.at("lang").get<std::string>(),
               j.at("question").get<std::string>()};
    if (q.lang.empty()) throw DataError("question '" + q.question_id + "' has empty lang");
    return q;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad question record: ") + e.what());
  }
}

}  // namespace polyqa
