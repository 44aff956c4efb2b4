#pragma once

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "emadapt/error.hpp"

// Checks that `expr` throws emadapt::Error with the given code.
#define CHECK_ERROR_CODE(expr, expected)                                   \
  do {                                                                     \
    bool caught_ = false;                                                  \
    try {                                                                  \
      (void)(expr);                                                        \
    } catch (const emadapt::Error& e_) {                                   \
      caught_ = true;                                                      \
      CHECK_MESSAGE(e_.code() == (expected), e_.what());                   \
    }                                                                      \
    CHECK_MESSAGE(caught_, "no emadapt::Error thrown by " #expr);          \
  } while (false)

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("emadapt_" + tag + "_" + std::to_string(std::rand()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};
