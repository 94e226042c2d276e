#include "anonypipe/protocol.hpp"

#include "anonypipe/image_io.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

namespace anonypipe::protocol {

using nlohmann::json;

namespace {

bool read_exact(int fd, char* buf, std::size_t n, bool allow_eof_at_start) {
    std::size_t got = 0;
    while (got < n) {
        const ssize_t r = ::read(fd, buf + got, n - got);
        if (r < 0 && errno == EINTR) continue;
        if (r < 0) throw ProtocolError(std::string("read failed: ") + std::strerror(errno));
        if (r == 0) {
            if (got == 0 && allow_eof_at_start) return false;
            throw ProtocolError("unexpected end of stream inside a frame");
        }
        got += static_cast<std::size_t>(r);
    }
    return true;
}

void write_exact(int fd, const char* buf, std::size_t n) {
    std::size_t put = 0;
    while (put < n) {
        const ssize_t w = ::write(fd, buf + put, n - put);
        if (w < 0 && errno == EINTR) continue;
        if (w <= 0) throw ProtocolError(std::string("write failed: ") + std::strerror(errno));
        put += static_cast<std::size_t>(w);
    }
}

std::string png_b64(const Image8& img) { return base64_encode(encode_png(img)); }
std::string mask_b64(const BitMask& m) { return base64_encode(encode_mask_png(m)); }

json latent_json(const Eigen::VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(static_cast<float>(v[i]));
    return arr;
}

Eigen::VectorXd latent_from_json(const json& arr) {
    const auto vals = arr.get<std::vector<float>>();
    Eigen::VectorXd v(static_cast<Eigen::Index>(vals.size()));
    for (std::size_t i = 0; i < vals.size(); ++i) v[static_cast<Eigen::Index>(i)] = vals[i];
    return v;
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const json& arr) {
    const auto vals = arr.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

json keypoints_json(const Keypoints& kps) {
    json arr = json::array();
    for (const auto& kp : kps) arr.push_back({kp.x, kp.y, kp.confidence});
    return arr;
}

Keypoints keypoints_from_json(const json& arr) {
    if (!arr.is_array() || arr.size() != kNumKeypoints) throw ProtocolError("keypoints must hold 17 triples");
    Keypoints kps;
    for (int i = 0; i < kNumKeypoints; ++i) kps[i] = {arr[i].at(0).get<double>(), arr[i].at(1).get<double>(), arr[i].at(2).get<double>()};
    return kps;
}

json request_common(const char* kind, const SynthesisRequest& req) {
    json j{{"kind", kind}, {"crop_png_base64", png_b64(req.crop)}, {"mask_png_base64", mask_b64(req.mask)},
           {"latent", latent_json(req.latent)}};
    if (req.keypoints) j["keypoints"] = keypoints_json(*req.keypoints);
    return j;
}

}  // namespace

void write_frame(int fd, const std::string& payload) {
    if (payload.size() > kMaxFrameBytes) throw ProtocolError("frame too large");
    const auto n = static_cast<std::uint32_t>(payload.size());
    const char prefix[4] = {char((n >> 24) & 0xff), char((n >> 16) & 0xff), char((n >> 8) & 0xff), char(n & 0xff)};
    write_exact(fd, prefix, 4);
    write_exact(fd, payload.data(), payload.size());
}

std::optional<std::string> read_frame(int fd) {
    unsigned char prefix[4];
    if (!read_exact(fd, reinterpret_cast<char*>(prefix), 4, true)) return std::nullopt;
    const std::uint32_t n = (std::uint32_t(prefix[0]) << 24) | (std::uint32_t(prefix[1]) << 16) |
                            (std::uint32_t(prefix[2]) << 8) | std::uint32_t(prefix[3]);
    if (n > kMaxFrameBytes) throw ProtocolError("frame length " + std::to_string(n) + " exceeds limit");
    std::string payload(n, '\0');
    read_exact(fd, payload.data(), n, false);
    return payload;
}

json encode_info(const BackendInfo& info) {
    return {{"kind", "response"},
            {"name", info.name},
            {"resolution", {info.resolution.height, info.resolution.width}},
            {"latent_dim", info.latent_dim},
            {"requires_keypoints", info.requires_keypoints},
            {"supports_gradient", info.supports_gradient},
            {"target", to_string(info.target)}};
}

BackendInfo decode_info(const json& j) {
    BackendInfo info;
    info.name = j.at("name").get<std::string>();
    info.resolution = {j.at("resolution").at(0).get<int>(), j.at("resolution").at(1).get<int>()};
    info.latent_dim = j.at("latent_dim").get<int>();
    info.requires_keypoints = j.at("requires_keypoints").get<bool>();
    info.supports_gradient = j.at("supports_gradient").get<bool>();
    const auto target = j.at("target").get<std::string>();
    if (target != "face" && target != "body") throw ProtocolError("unknown backend target " + target);
    info.target = target == "face" ? RegionKind::face : RegionKind::body;
    if (info.resolution.height <= 0 || info.resolution.width <= 0 || info.latent_dim <= 0)
        throw ProtocolError("backend reported a non-positive resolution or latent size");
    if (info.target == RegionKind::face && info.requires_keypoints)
        throw ProtocolError("face backends must not require keypoints");
    return info;
}

json encode_synthesize(const SynthesisRequest& req) { return request_common("synthesize", req); }

json encode_loss_grad(const SynthesisRequest& req, const LossSpec& spec) {
    json j = request_common("loss_grad", req);
    j["loss_spec"] = {{"type", "hsv_sv_w1_soft"},
                      {"bins", spec.bins},
                      {"ref_s", vector_json(spec.ref_s)},
                      {"ref_v", vector_json(spec.ref_v)},
                      {"masked_only", spec.masked_only}};
    return j;
}

SynthesisRequest decode_request(const json& j) {
    SynthesisRequest req;
    req.crop = decode_image(base64_decode(j.at("crop_png_base64").get<std::string>()));
    req.mask = decode_mask_png(base64_decode(j.at("mask_png_base64").get<std::string>()));
    req.latent = latent_from_json(j.at("latent"));
    if (j.contains("keypoints") && !j.at("keypoints").is_null()) req.keypoints = keypoints_from_json(j.at("keypoints"));
    return req;
}

LossSpec decode_loss_spec(const json& j) {
    if (j.value("type", "") != "hsv_sv_w1_soft") throw ProtocolError("unsupported loss_spec type");
    LossSpec spec;
    spec.bins = j.at("bins").get<int>();
    spec.ref_s = vector_from_json(j.at("ref_s"));
    spec.ref_v = vector_from_json(j.at("ref_v"));
    spec.masked_only = j.value("masked_only", false);
    return spec;
}

json encode_image_response(const Image8& img) { return {{"kind", "response"}, {"image_png_base64", png_b64(img)}}; }

json encode_loss_grad_response(const LossGrad& lg) {
    return {{"kind", "response"}, {"loss", lg.loss}, {"grad", latent_json(lg.grad)}};
}

json encode_error(const std::string& message) { return {{"kind", "error"}, {"message", message}}; }

json handle(GeneratorBackend& backend, const std::string& payload) {
    try {
        const json j = json::parse(payload);
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "info") return encode_info(backend.info());
        if (kind == "synthesize") return encode_image_response(backend.synthesize(decode_request(j)));
        if (kind == "loss_grad") {
            if (!backend.info().supports_gradient) return encode_error("capability: backend has no gradients");
            return encode_loss_grad_response(backend.loss_grad(decode_request(j), decode_loss_spec(j.at("loss_spec"))));
        }
        return encode_error("unknown request kind '" + kind + "'");
    } catch (const std::exception& e) {
        return encode_error(e.what());
    }
}

std::size_t serve(GeneratorBackend& backend, int in_fd, int out_fd) {
    std::size_t answered = 0;
    while (auto frame = read_frame(in_fd)) {
        write_frame(out_fd, handle(backend, *frame).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace));
        ++answered;
    }
    return answered;
}

ProcessBackend::ProcessBackend(const std::string& command) : command_(command) {
    int in_pipe[2], out_pipe[2];
    // close-on-exec from the start so concurrently spawned children never inherit each other's pipes
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw BackendError("pipe failed");
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw BackendError("pipe failed");
    }
    // a dead child must surface as EPIPE, not kill the pipeline
    std::signal(SIGPIPE, SIG_IGN);
    pid_ = ::fork();
    if (pid_ < 0) {
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
        throw BackendError("fork failed");
    }
    if (pid_ == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    try {
        info_ = decode_info(call({{"kind", "info"}}));
    } catch (...) {
        shutdown();
        throw;
    }
}

ProcessBackend::~ProcessBackend() { shutdown(); }

void ProcessBackend::shutdown() {
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    to_child_ = from_child_ = -1;
    if (pid_ > 0) {
        int status = 0;
        ::waitpid(pid_, &status, 0);
        pid_ = -1;
    }
}

json ProcessBackend::call(const json& request) {
    write_frame(to_child_, request.dump());
    auto frame = read_frame(from_child_);
    if (!frame) throw BackendError("backend '" + command_ + "' closed its output");
    json response;
    try {
        response = json::parse(*frame);
    } catch (const json::parse_error& e) {
        throw ProtocolError(std::string("malformed response: ") + e.what());
    }
    const auto kind = response.value("kind", "");
    if (kind == "error") throw BackendError("backend error: " + response.value("message", ""));
    if (kind != "response") throw ProtocolError("unexpected response kind '" + kind + "'");
    return response;
}

Image8 ProcessBackend::synthesize(const SynthesisRequest& request) {
    const json r = call(encode_synthesize(request));
    Image8 img = decode_image(base64_decode(r.at("image_png_base64").get<std::string>()));
    if (img.width() != request.crop.width() || img.height() != request.crop.height())
        throw ProtocolError("backend returned an image of the wrong size");
    return img;
}

LossGrad ProcessBackend::loss_grad(const SynthesisRequest& request, const LossSpec& spec) {
    if (!info_.supports_gradient) throw BackendError(info_.name + " has no gradients");
    const json r = call(encode_loss_grad(request, spec));
    LossGrad lg{r.at("loss").get<double>(), latent_from_json(r.at("grad"))};
    if (lg.grad.size() != info_.latent_dim) throw ProtocolError("gradient has the wrong dimension");
    return lg;
}

}  // namespace anonypipe::protocol
