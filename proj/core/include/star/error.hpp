#pragma once

#include <stdexcept>
#include <string>

namespace star {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input could not be read at all (missing file, truncated gzip, ...).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Filtering removed every interaction.
class EmptyDatasetError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or argument combination. Maps to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A stage needs an artifact that an earlier stage has not produced.
class MissingArtifactError : public Error {
 public:
  MissingArtifactError(const std::string& path, const std::string& step)
      : Error("missing artifact '" + path + "': run `star " + step + "` first"),
        path_(path),
        step_(step) {}

  const std::string& path() const noexcept { return path_; }
  const std::string& step() const noexcept { return step_; }

 private:
  std::string path_;
  std::string step_;
};

/// Embedding or chat provider failed after exhausting retries.
class ProviderError : public Error {
 public:
  using Error::Error;
};

}  // namespace star
