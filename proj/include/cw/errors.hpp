#pragma once

#include <stdexcept>
#include <string>

namespace cw {

// Base class for every error the pipeline can surface. Each concrete type
// corresponds to one failure mode a caller may want to handle separately.
class Error : public std::runtime_error {
public:
    explicit Error(std::string msg) : std::runtime_error(std::move(msg)) {}
};

// -- knowledge sources --------------------------------------------------
class SourceUnavailable : public Error {
public:
    using Error::Error;
};

class NotFound : public Error {
public:
    using Error::Error;
};

// -- model gateway -------------------------------------------------------
class ProviderError : public Error {
public:
    using Error::Error;
};

class ContextOverflow : public Error {
public:
    using Error::Error;
};

class MissingBinding : public Error {
public:
    explicit MissingBinding(const std::string& placeholder)
        : Error("missing binding: " + placeholder), placeholder_(placeholder) {}
    const std::string& placeholder() const { return placeholder_; }

private:
    std::string placeholder_;
};

// -- retrieval / corpus ---------------------------------------------------
class ParseFailure : public Error {
public:
    using Error::Error;
};

class EmptyCorpus : public Error {
public:
    using Error::Error;
};

// -- clustering -------------------------------------------------------
class InvalidK : public Error {
public:
    using Error::Error;
};

class SingleCluster : public Error {
public:
    using Error::Error;
};

// -- summarizer ------------------------------------------------------
class MissingLeaf : public Error {
public:
    explicit MissingLeaf(const std::string& doc_id)
        : Error("no leaf summary for document: " + doc_id), doc_id_(doc_id) {}
    const std::string& doc_id() const { return doc_id_; }

private:
    std::string doc_id_;
};

// -- evaluator ---------------------------------------------------------
class NoParagraphs : public Error {
public:
    using Error::Error;
};

// -- pipeline / config --------------------------------------------------
class ConfigError : public Error {
public:
    using Error::Error;
};

class CorruptManifest : public Error {
public:
    using Error::Error;
};

class StageFailure : public Error {
public:
    StageFailure(std::string stage, const std::string& msg)
        : Error("stage '" + stage + "' failed: " + msg), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

} // namespace cw
