#pragma once

// JSON helpers shared by the model files. Matrices are stored as
// {"rows": r, "cols": c, "data": [row-major values]}.

#include <filesystem>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace headstrain {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

nlohmann::json read_json(const std::filesystem::path& path);
/// Writes `j` with two-space indentation; returns the FNV-1a hash of the bytes.
std::uint64_t write_json(const nlohmann::json& j, const std::filesystem::path& path);

/// Hex rendering used for provenance hashes.
std::string hash_hex(std::uint64_t h);

}  // namespace headstrain
