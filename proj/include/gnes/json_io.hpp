#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace gnes {

/// Matrices are stored row-major with explicit dims: {"rows", "cols", "data"}.
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const char* what);

nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j, const char* what);

nlohmann::json read_json_file(const std::filesystem::path& path);
/// Writes to a sibling temp file and renames it over the target.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace gnes
