#pragma once

#include <stdexcept>
#include <string>

namespace canopy {

enum class Errc {
    // topology / config
    DuplicateId,
    DanglingParent,
    BadParentLevel,
    NoCloud,
    MultipleClouds,
    UnknownNode,
    BadFailureWindow,
    BadConfig,
    // simulation
    ScheduleInPast,
    // dsl
    ParseError,
    UnknownLevel,
    UnknownVariable,
    // runtime
    KindMismatch,
    LevelViolation,
    SubtreeViolation,
    SameAppViolation,
    UnknownFunction,
    AlreadyBound,
    UnknownApp,
    UnknownFlow,
    NotDeployed,
    NoneEligible,
    // allocator
    MissingEntry,
    NegativeCost,
    Infeasible,
    ConstraintViolated,
    BudgetExceeded,
    // shell / cli
    ResourceViolation,
    UnknownJob,
    IoError,
};

inline const char* errc_name(Errc c) {
    switch (c) {
        case Errc::DuplicateId: return "DuplicateId";
        case Errc::DanglingParent: return "DanglingParent";
        case Errc::BadParentLevel: return "BadParentLevel";
        case Errc::NoCloud: return "NoCloud";
        case Errc::MultipleClouds: return "MultipleClouds";
        case Errc::UnknownNode: return "UnknownNode";
        case Errc::BadFailureWindow: return "BadFailureWindow";
        case Errc::BadConfig: return "BadConfig";
        case Errc::ScheduleInPast: return "ScheduleInPast";
        case Errc::ParseError: return "ParseError";
        case Errc::UnknownLevel: return "UnknownLevel";
        case Errc::UnknownVariable: return "UnknownVariable";
        case Errc::KindMismatch: return "KindMismatch";
        case Errc::LevelViolation: return "LevelViolation";
        case Errc::SubtreeViolation: return "SubtreeViolation";
        case Errc::SameAppViolation: return "SameAppViolation";
        case Errc::UnknownFunction: return "UnknownFunction";
        case Errc::AlreadyBound: return "AlreadyBound";
        case Errc::UnknownApp: return "UnknownApp";
        case Errc::UnknownFlow: return "UnknownFlow";
        case Errc::NotDeployed: return "NotDeployed";
        case Errc::NoneEligible: return "NoneEligible";
        case Errc::MissingEntry: return "MissingEntry";
        case Errc::NegativeCost: return "NegativeCost";
        case Errc::Infeasible: return "Infeasible";
        case Errc::ConstraintViolated: return "ConstraintViolated";
        case Errc::BudgetExceeded: return "BudgetExceeded";
        case Errc::ResourceViolation: return "ResourceViolation";
        case Errc::UnknownJob: return "UnknownJob";
        case Errc::IoError: return "IoError";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& msg)
        : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

}  // namespace canopy
