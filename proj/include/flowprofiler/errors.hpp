#pragma once

#include <stdexcept>
#include <string>

namespace flowprofiler {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Configuration / plan validation problems (CLI exit code 2).
struct ConfigError : Error {
    using Error::Error;
};

// Input parsing problems: pcap, CSV, malformed files (CLI exit code 3).
struct ParseError : Error {
    using Error::Error;
};
struct IoFailure : ParseError {
    using ParseError::ParseError;
};
struct UnsupportedFormat : ParseError {
    using ParseError::ParseError;
};
struct TruncatedHeader : ParseError {
    using ParseError::ParseError;
};
struct FrameTooShort : ParseError {
    using ParseError::ParseError;
};

// Degenerate analytic outcomes (CLI exit code 4).
struct DegenerateResult : Error {
    using Error::Error;
};
struct DegenerateClustering : DegenerateResult {
    using DegenerateResult::DegenerateResult;
};
struct DegenerateGrid : DegenerateResult {
    using DegenerateResult::DegenerateResult;
};

// Contract violations on library calls.
struct InvalidArgument : Error {
    using Error::Error;
};
struct NonFiniteInput : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};
struct DimensionMismatch : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};
struct LengthMismatch : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};
struct InsufficientData : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};
struct SingleCluster : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};
struct EmptyModel : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};
struct EmptyBatch : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};
struct EmptyEvaluationSet : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

} // namespace flowprofiler
