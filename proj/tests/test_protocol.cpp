#include "support.hpp"

#include "anonypipe/protocol.hpp"

#include <doctest.h>

#include <unistd.h>

using namespace anonypipe;
using namespace anonypipe::protocol;
using nlohmann::json;
using testing::Rng;

namespace {

std::string serve_command(const std::string& args) { return std::string(ANONYPIPE_CLI) + " serve-toy " + args; }

SynthesisRequest face_request(Rng& rng, int side) {
    BitMask m = BitMask::Zero(side, side);
    m.block(side / 4, side / 4, side / 2, side / 2).setConstant(true);
    Eigen::VectorXd z(8);
    for (int i = 0; i < 8; ++i) z[i] = static_cast<float>(rng.normal());  // exactly representable on the wire
    return make_request(ToyGenerator::face_info(side), testing::smooth_image(rng, side, side), m, std::nullopt, z);
}

}  // namespace

TEST_CASE("frames round-trip through a pipe") {
    int fds[2];
    REQUIRE(::pipe(fds) == 0);
    write_frame(fds[1], "");
    write_frame(fds[1], "{\"kind\":\"info\"}");
    ::close(fds[1]);
    CHECK(read_frame(fds[0]) == std::string());
    CHECK(read_frame(fds[0]) == std::string("{\"kind\":\"info\"}"));
    CHECK(!read_frame(fds[0]));
    ::close(fds[0]);

    REQUIRE(::pipe(fds) == 0);
    const char truncated[6] = {0, 0, 0, 9, 'a', 'b'};
    REQUIRE(::write(fds[1], truncated, 6) == 6);
    ::close(fds[1]);
    CHECK_THROWS_AS(read_frame(fds[0]), ProtocolError);
    ::close(fds[0]);
}

TEST_CASE("length prefix is big-endian") {
    int fds[2];
    REQUIRE(::pipe(fds) == 0);
    write_frame(fds[1], std::string(258, 'x'));
    unsigned char prefix[4];
    REQUIRE(::read(fds[0], prefix, 4) == 4);
    CHECK(prefix[0] == 0);
    CHECK(prefix[1] == 0);
    CHECK(prefix[2] == 1);
    CHECK(prefix[3] == 2);
    ::close(fds[0]);
    ::close(fds[1]);
}

TEST_CASE("messages encode and decode") {
    Rng rng(71);
    const auto info = ToyGenerator::body_info();
    CHECK(decode_info(encode_info(info)) == info);
    const json j = encode_info(info);
    CHECK(j["resolution"] == json::array({288, 160}));

    auto req = face_request(rng, 16);
    Keypoints kps{};
    kps[3] = {1.5, 2.5, 1.0};
    req.keypoints = kps;
    const json wire = json::parse(encode_synthesize(req).dump());
    CHECK(wire["kind"] == "synthesize");
    const SynthesisRequest back = decode_request(wire);
    CHECK(back.crop == req.crop);
    CHECK((back.mask == req.mask).all());
    CHECK(back.latent == req.latent);
    REQUIRE(back.keypoints);
    CHECK((*back.keypoints)[3].y == 2.5);

    const LossSpec spec = make_loss_spec(req.crop, req.mask, true, 8);
    const LossSpec spec_back = decode_loss_spec(json::parse(encode_loss_grad(req, spec).dump())["loss_spec"]);
    CHECK(spec_back.bins == 8);
    CHECK(spec_back.masked_only);
    CHECK(spec_back.ref_s == spec.ref_s);
    CHECK(spec_back.ref_v == spec.ref_v);
    CHECK_THROWS_AS(decode_loss_spec(json{{"type", "l2"}}), ProtocolError);
}

TEST_CASE("handle answers malformed input with errors") {
    ToyGenerator toy(ToyGenerator::face_info(16));
    for (const char* bad : {"", "not json", "[]", "{}", "{\"kind\": 3}", "{\"kind\": \"dance\"}",
                            "{\"kind\": \"synthesize\"}", "{\"kind\": \"synthesize\", \"crop_png_base64\": \"!!\"}",
                            "{\"kind\": \"loss_grad\", \"latent\": [1]}"}) {
        const json r = handle(toy, bad);
        CHECK_MESSAGE(r["kind"] == "error", bad);
        CHECK(r.contains("message"));
    }
    CHECK(handle(toy, "{\"kind\":\"info\"}")["name"] == "toy-face-16");
}

TEST_CASE("serve fuzz: garbage never ends the session") {
    Rng rng(72);
    ToyGenerator toy(ToyGenerator::face_info(16));
    int to_server[2], from_server[2];
    REQUIRE(::pipe(to_server) == 0);
    REQUIRE(::pipe(from_server) == 0);
    // enough small frames to stay within pipe buffers
    int sent = 0;
    for (int i = 0; i < 60; ++i) {
        std::string junk(rng.uniform_int(0, 40), ' ');
        for (auto& ch : junk) ch = static_cast<char>(rng.uniform_int(0, 255));
        if (i % 10 == 0) junk = "{\"kind\":\"info\"}";
        write_frame(to_server[1], junk);
        ++sent;
    }
    ::close(to_server[1]);
    CHECK(serve(toy, to_server[0], from_server[1]) == std::size_t(sent));
    ::close(from_server[1]);
    int infos = 0, answers = 0;
    while (auto f = read_frame(from_server[0])) {
        ++answers;
        infos += json::parse(*f).value("kind", "") == "response";
    }
    CHECK(answers == sent);
    CHECK(infos == 6);
    ::close(to_server[0]);
    ::close(from_server[0]);
}

TEST_CASE("process backend matches the in-process generator") {
    Rng rng(73);
    ProcessBackend remote(serve_command("--target face --size 32"));
    ToyGenerator local(ToyGenerator::face_info(32));
    CHECK(remote.info() == local.info());
    for (int i = 0; i < 20; ++i) {
        const auto req = face_request(rng, 32);
        REQUIRE(remote.synthesize(req) == local.synthesize(req));
    }
    const auto req = face_request(rng, 32);
    const LossSpec spec = make_loss_spec(testing::smooth_image(rng, 32, 32), req.mask, false);
    const LossGrad a = remote.loss_grad(req, spec), b = local.loss_grad(req, spec);
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
    CHECK((a.grad - b.grad).norm() <= 1e-4 * std::max(1e-12, b.grad.norm()) + 1e-7);

    auto bad = req;
    bad.crop = Image8(8, 8, 0);
    bad.mask = BitMask::Zero(8, 8);
    CHECK_THROWS_AS(remote.synthesize(bad), BackendError);
    CHECK(remote.synthesize(req) == local.synthesize(req));  // session survived the error
}

TEST_CASE("process backend failures") {
    CHECK_THROWS_AS(ProcessBackend("exit 0"), BackendError);
    CHECK_THROWS(ProcessBackend("printf 'abc'"));
}
