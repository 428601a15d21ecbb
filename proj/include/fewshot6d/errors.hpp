#pragma once

#include <exception>
#include <string>
#include <utility>

namespace fewshot6d {

// Base error for all toolkit failures. Pipeline stages annotate the error
// with the stage name before it propagates out of estimate().
class Error : public std::exception {
public:
    Error(std::string kind, std::string message)
        : kind_(std::move(kind)), message_(std::move(message)) {
        rebuild();
    }

    const char* what() const noexcept override { return full_.c_str(); }
    const std::string& kind() const noexcept { return kind_; }
    const std::string& stage() const noexcept { return stage_; }

    void set_stage(const std::string& stage) {
        if (stage_.empty()) {
            stage_ = stage;
            rebuild();
        }
    }

private:
    void rebuild() {
        full_ = stage_.empty() ? kind_ + ": " + message_
                               : "[" + stage_ + "] " + kind_ + ": " + message_;
    }

    std::string kind_;
    std::string message_;
    std::string stage_;
    std::string full_;
};

#define FEWSHOT6D_DEFINE_ERROR(Name)                                 \
    class Name : public Error {                                      \
    public:                                                          \
        explicit Name(std::string message = "")                      \
            : Error(#Name, std::move(message)) {}                    \
    }

// core_geometry
FEWSHOT6D_DEFINE_ERROR(NonPositiveDepth);
FEWSHOT6D_DEFINE_ERROR(InvalidDepth);

// dense_segmentation
FEWSHOT6D_DEFINE_ERROR(AllDepthInvalid);
FEWSHOT6D_DEFINE_ERROR(EmptySegment);

// self_adaptation
FEWSHOT6D_DEFINE_ERROR(CenterOutsideImage);
FEWSHOT6D_DEFINE_ERROR(DimensionMismatch);
FEWSHOT6D_DEFINE_ERROR(NoPositives);
FEWSHOT6D_DEFINE_ERROR(NoSegments);

// object_model / registration
FEWSHOT6D_DEFINE_ERROR(EmptyCloud);
FEWSHOT6D_DEFINE_ERROR(TooFewPoints);
FEWSHOT6D_DEFINE_ERROR(NoHypothesis);
FEWSHOT6D_DEFINE_ERROR(DegenerateConfiguration);

// pose_pipeline
FEWSHOT6D_DEFINE_ERROR(RoiOutsideImage);

// evaluation_metrics
FEWSHOT6D_DEFINE_ERROR(MissingGroundTruth);

// synthetic_harness
FEWSHOT6D_DEFINE_ERROR(EmptySpec);

// io / config
FEWSHOT6D_DEFINE_ERROR(IoError);
FEWSHOT6D_DEFINE_ERROR(ConfigError);

#undef FEWSHOT6D_DEFINE_ERROR

// Raised by the pipeline when the best candidate's confidence falls below
// the rejection threshold; carries the offending confidence.
class TargetNotFound : public Error {
public:
    explicit TargetNotFound(double conf, std::string message = "")
        : Error("TargetNotFound", std::move(message)), conf_(conf) {}
    double conf() const noexcept { return conf_; }

private:
    double conf_ = 0.0;
};

}  // namespace fewshot6d
