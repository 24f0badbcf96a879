#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

namespace testutil {

// Fresh scratch directory for one test, under HEADSTRAIN_TEST_TMP when set.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const char* base = std::getenv("HEADSTRAIN_TEST_TMP");
  std::filesystem::path root = base ? base : std::filesystem::temp_directory_path() / "headstrain-tests";
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  std::filesystem::path dir = root / (std::string(info->test_suite_name()) + "." + info->name() + "." + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
