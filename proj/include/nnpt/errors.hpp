#pragma once

#include <stdexcept>
#include <string>

namespace nnpt {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class UnsupportedOrder : public Error {
public:
    using Error::Error;
};

class NonFiniteSample : public Error {
public:
    using Error::Error;
};

class DegenerateFit : public Error {
public:
    using Error::Error;
};

class TrainingDiverged : public Error {
public:
    TrainingDiverged(int epoch, const std::string& what)
        : Error(what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

class ThresholdSingularity : public Error {
public:
    using Error::Error;
};

class BoundStatePresent : public Error {
public:
    using Error::Error;
};

class MissingArtifact : public Error {
public:
    explicit MissingArtifact(std::string path)
        : Error("missing input artifact: " + path), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

} // namespace nnpt
