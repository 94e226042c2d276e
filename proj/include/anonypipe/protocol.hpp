#pragma once

#include "anonypipe/backend.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <optional>
#include <string>

namespace anonypipe::protocol {

/// Frames are a 4-byte big-endian payload length followed by UTF-8 JSON.
inline constexpr std::uint32_t kMaxFrameBytes = 256u << 20;

class ProtocolError : public BackendError {
public:
    using BackendError::BackendError;
};

/// Writes one frame; throws ProtocolError on a short write.
void write_frame(int fd, const std::string& payload);
/// Reads one frame; std::nullopt on clean end-of-stream before the length prefix.
std::optional<std::string> read_frame(int fd);

nlohmann::json encode_info(const BackendInfo& info);
BackendInfo decode_info(const nlohmann::json& j);

nlohmann::json encode_synthesize(const SynthesisRequest& req);
nlohmann::json encode_loss_grad(const SynthesisRequest& req, const LossSpec& spec);
SynthesisRequest decode_request(const nlohmann::json& j);
LossSpec decode_loss_spec(const nlohmann::json& j);

nlohmann::json encode_image_response(const Image8& img);
nlohmann::json encode_loss_grad_response(const LossGrad& lg);
nlohmann::json encode_error(const std::string& message);

/// Answers one request. Malformed input yields an error response rather than an exception.
nlohmann::json handle(GeneratorBackend& backend, const std::string& payload);

/// Serves requests until end-of-stream. Returns the number of requests answered.
std::size_t serve(GeneratorBackend& backend, int in_fd, int out_fd);

/// Backend living in a child process started with `/bin/sh -c command`, speaking over its stdio.
class ProcessBackend final : public GeneratorBackend {
public:
    explicit ProcessBackend(const std::string& command);
    ~ProcessBackend() override;
    ProcessBackend(const ProcessBackend&) = delete;
    ProcessBackend& operator=(const ProcessBackend&) = delete;

    BackendInfo info() const override { return info_; }
    Image8 synthesize(const SynthesisRequest& request) override;
    LossGrad loss_grad(const SynthesisRequest& request, const LossSpec& spec) override;

private:
    nlohmann::json call(const nlohmann::json& request);
    void shutdown();

    int pid_ = -1;
    int to_child_ = -1, from_child_ = -1;
    std::string command_;
    BackendInfo info_;
};

}  // namespace anonypipe::protocol
