#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "soundrep/wav.hpp"

using namespace soundrep;

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
}
void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

// Hand-built container so sample bytes are controlled exactly.
std::vector<std::uint8_t> make_wav(std::uint16_t format, std::uint16_t channels,
                                   std::uint32_t rate, std::uint16_t bits,
                                   const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> w;
  put_tag(w, "RIFF");
  put_u32(w, 36 + static_cast<std::uint32_t>(payload.size()));
  put_tag(w, "WAVE");
  put_tag(w, "fmt ");
  put_u32(w, 16);
  put_u16(w, format);
  put_u16(w, channels);
  put_u32(w, rate);
  put_u32(w, rate * channels * bits / 8);
  put_u16(w, static_cast<std::uint16_t>(channels * bits / 8));
  put_u16(w, bits);
  put_tag(w, "data");
  put_u32(w, static_cast<std::uint32_t>(payload.size()));
  w.insert(w.end(), payload.begin(), payload.end());
  return w;
}

std::vector<std::uint8_t> pcm16_payload(const std::vector<std::int16_t>& samples) {
  std::vector<std::uint8_t> p;
  for (std::int16_t s : samples) {
    p.push_back(static_cast<std::uint8_t>(s & 0xff));
    p.push_back(static_cast<std::uint8_t>((s >> 8) & 0xff));
  }
  return p;
}

}  // namespace

TEST_CASE("one second of digital silence decodes to 22050 zeros") {
  std::vector<double> silence(22050, 0.0);
  const auto bytes = encode_wav_pcm16(silence, 22050);
  const AudioClip clip = decode_wav(bytes, "silence");
  REQUIRE(clip.samples.size() == 22050);
  CHECK(clip.sample_rate == 22050);
  for (double s : clip.samples) CHECK(s == 0.0);
}

TEST_CASE("full-scale PCM16 sample -32768 maps to -1.0") {
  const auto bytes = make_wav(1, 1, 22050, 16, pcm16_payload({-32768, 32767}));
  const AudioClip clip = decode_wav(bytes, "fullscale");
  REQUIRE(clip.samples.size() == 2);
  CHECK(clip.samples[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(clip.samples[1] == doctest::Approx(32767.0 / 32768.0).epsilon(1e-12));
}

TEST_CASE("symmetric stereo downmixes to zero") {
  std::vector<std::int16_t> interleaved;
  for (int i = 0; i < 100; ++i) {
    interleaved.push_back(16384);   // +0.5
    interleaved.push_back(-16384);  // -0.5
  }
  const auto bytes = make_wav(1, 2, 44100, 16, pcm16_payload(interleaved));
  const AudioClip clip = decode_wav(bytes, "stereo");
  REQUIRE(clip.samples.size() == 100);
  for (double s : clip.samples) CHECK(s == 0.0);
}

TEST_CASE("ieee float32 payload decodes") {
  std::vector<std::uint8_t> payload(8);
  const float a = 0.25f, b = -0.75f;
  std::memcpy(payload.data(), &a, 4);
  std::memcpy(payload.data() + 4, &b, 4);
  const auto bytes = make_wav(3, 1, 22050, 32, payload);
  const AudioClip clip = decode_wav(bytes, "f32");
  REQUIRE(clip.samples.size() == 2);
  CHECK(clip.samples[0] == doctest::Approx(0.25));
  CHECK(clip.samples[1] == doctest::Approx(-0.75));
}

TEST_CASE("malformed and unsupported containers are rejected") {
  std::vector<std::uint8_t> junk = {'J', 'U', 'N', 'K', 0, 0, 0, 0};
  CHECK_THROWS_AS(decode_wav(junk, "junk"), DecodeError);

  const auto pcm8 = make_wav(1, 1, 22050, 8, {0x80, 0x80});
  CHECK_THROWS_AS(decode_wav(pcm8, "pcm8"), UnsupportedFormatError);

  const auto many_channels = make_wav(1, 4, 22050, 16, pcm16_payload({0, 0, 0, 0}));
  CHECK_THROWS_AS(decode_wav(many_channels, "4ch"), UnsupportedFormatError);

  auto truncated = make_wav(1, 1, 22050, 16, pcm16_payload({0, 0}));
  truncated[40] = 0xff;  // data chunk claims more bytes than present
  CHECK_THROWS_AS(decode_wav(truncated, "trunc"), DecodeError);
}

TEST_CASE("pcm16 encode/decode round trip") {
  std::vector<double> samples(500);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i] = 0.9 * std::sin(0.07 * static_cast<double>(i));
  }
  const auto bytes = encode_wav_pcm16(samples, 22050);
  const AudioClip clip = decode_wav(bytes, "roundtrip");
  REQUIRE(clip.samples.size() == samples.size());
  // Quantization plus the 32767/32768 scaling mismatch bound the error.
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(std::abs(clip.samples[i] - samples[i]) < 1.0 / 16000.0);
  }
}
