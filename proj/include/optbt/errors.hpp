#pragma once

#include <stdexcept>
#include <string>

namespace optbt {

// Error taxonomy used by the CLI to pick exit codes: config errors exit 2,
// data errors exit 3. Everything else is a contract violation (a bug in the
// caller) and propagates as-is.
enum class ErrorKind { config, data, contract };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct ContractError : Error {
    explicit ContractError(const std::string& what) : Error(ErrorKind::contract, what) {}
};

// market_data
struct ParseError : DataError {
    ParseError(std::size_t row, const std::string& column, const std::string& detail)
        : DataError("parse error at row " + std::to_string(row) + ", column '" + column + "': " + detail),
          row(row), column(column) {}
    std::size_t row;
    std::string column;
};
struct DuplicateKey : DataError {
    explicit DuplicateKey(const std::string& key) : DataError("duplicate key: " + key) {}
};
struct MissingStockPrice : DataError {
    explicit MissingStockPrice(const std::string& what) : DataError(what) {}
};
struct NoEligibleStrike : DataError {
    explicit NoEligibleStrike(const std::string& what) : DataError(what) {}
};
struct MissingLeg : DataError {
    explicit MissingLeg(const std::string& what) : DataError(what) {}
};
struct DegenerateDeltas : DataError {
    explicit DegenerateDeltas(const std::string& what) : DataError(what) {}
};
struct GapInSeries : DataError {
    explicit GapInSeries(const std::string& what) : DataError(what) {}
};
struct IOError : DataError {
    explicit IOError(const std::string& what) : DataError(what) {}
};

// indicators
struct InsufficientHistory : ContractError {
    explicit InsufficientHistory(const std::string& what) : ContractError(what) {}
};

// strategies
struct TooFewStocks : DataError {
    explicit TooFewStocks(const std::string& what) : DataError(what) {}
};

// models
struct ShapeMismatch : ContractError {
    explicit ShapeMismatch(const std::string& what) : ContractError(what) {}
};

// training
struct BatchTooSmall : ContractError {
    explicit BatchTooSmall(const std::string& what) : ContractError(what) {}
};
struct MissingLinkage : ContractError {
    explicit MissingLinkage(const std::string& what) : ContractError(what) {}
};
struct GraphNotRecorded : ContractError {
    explicit GraphNotRecorded(const std::string& what) : ContractError(what) {}
};
struct EmptySplit : DataError {
    explicit EmptySplit(const std::string& what) : DataError(what) {}
};

// backtest
struct SpanTooShort : DataError {
    explicit SpanTooShort(const std::string& what) : DataError(what) {}
};
struct AlignmentError : ContractError {
    explicit AlignmentError(const std::string& what) : ContractError(what) {}
};
struct ZeroVariance : DataError {
    explicit ZeroVariance(const std::string& what) : DataError(what) {}
};

}  // namespace optbt
