#include "zr/crypto.hpp"

#include <memory>

#include <openssl/evp.h>
#include <openssl/kdf.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

#include "zr/error.hpp"

namespace zr::crypto {

namespace {

struct PkeyCtxDeleter {
    void operator()(EVP_PKEY_CTX* p) const { EVP_PKEY_CTX_free(p); }
};
struct CipherCtxDeleter {
    void operator()(EVP_CIPHER_CTX* p) const { EVP_CIPHER_CTX_free(p); }
};
using PkeyCtx = std::unique_ptr<EVP_PKEY_CTX, PkeyCtxDeleter>;
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

[[noreturn]] void fail(const char* what) { throw Error(Errc::InvalidArgument, std::string("crypto: ") + what); }

ByteVec hkdf(int mode, ByteView salt, ByteView key, ByteView info, std::size_t length)
{
    PkeyCtx ctx(EVP_PKEY_CTX_new_id(EVP_PKEY_HKDF, nullptr));
    if (!ctx || EVP_PKEY_derive_init(ctx.get()) <= 0) fail("hkdf init");
    if (EVP_PKEY_CTX_set_hkdf_md(ctx.get(), EVP_sha256()) <= 0) fail("hkdf md");
    if (EVP_PKEY_CTX_set_hkdf_mode(ctx.get(), mode) <= 0) fail("hkdf mode");
    if (!salt.empty() && EVP_PKEY_CTX_set1_hkdf_salt(ctx.get(), salt.data(), static_cast<int>(salt.size())) <= 0)
        fail("hkdf salt");
    if (EVP_PKEY_CTX_set1_hkdf_key(ctx.get(), key.data(), static_cast<int>(key.size())) <= 0) fail("hkdf key");
    if (!info.empty() && EVP_PKEY_CTX_add1_hkdf_info(ctx.get(), info.data(), static_cast<int>(info.size())) <= 0)
        fail("hkdf info");
    ByteVec out(length);
    std::size_t out_len = length;
    if (EVP_PKEY_derive(ctx.get(), out.data(), &out_len) <= 0) fail("hkdf derive");
    out.resize(out_len);
    return out;
}

} // namespace

ByteVec hkdf_extract_sha256(ByteView salt, ByteView ikm)
{
    return hkdf(EVP_PKEY_HKDEF_MODE_EXTRACT_ONLY, salt, ikm, {}, 32);
}

ByteVec hkdf_expand_sha256(ByteView prk, ByteView info, std::size_t length)
{
    return hkdf(EVP_PKEY_HKDEF_MODE_EXPAND_ONLY, {}, prk, info, length);
}

ByteVec hkdf_expand_label(ByteView secret, std::string_view label, ByteView context, std::size_t length)
{
    ByteVec info;
    put_u16(info, static_cast<std::uint16_t>(length));
    std::string full = "tls13 ";
    full += label;
    put_u8(info, static_cast<std::uint8_t>(full.size()));
    append(info, as_bytes(full));
    put_u8(info, static_cast<std::uint8_t>(context.size()));
    append(info, context);
    return hkdf_expand_sha256(secret, info, length);
}

ByteVec aes128_gcm_seal(ByteView key, ByteView nonce, ByteView aad, ByteView plaintext)
{
    CipherCtx ctx(EVP_CIPHER_CTX_new());
    if (!ctx) fail("cipher ctx");
    if (EVP_EncryptInit_ex(ctx.get(), EVP_aes_128_gcm(), nullptr, nullptr, nullptr) != 1) fail("gcm init");
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(nonce.size()), nullptr) != 1)
        fail("gcm ivlen");
    if (EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), nonce.data()) != 1) fail("gcm key");
    int len = 0;
    if (!aad.empty() && EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1)
        fail("gcm aad");
    ByteVec out(plaintext.size() + 16);
    int written = 0;
    if (!plaintext.empty() &&
        EVP_EncryptUpdate(ctx.get(), out.data(), &written, plaintext.data(), static_cast<int>(plaintext.size())) != 1)
        fail("gcm update");
    int fin = 0;
    if (EVP_EncryptFinal_ex(ctx.get(), out.data() + written, &fin) != 1) fail("gcm final");
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, 16, out.data() + plaintext.size()) != 1)
        fail("gcm tag");
    return out;
}

std::optional<ByteVec> aes128_gcm_open(ByteView key, ByteView nonce, ByteView aad, ByteView sealed)
{
    if (sealed.size() < 16) return std::nullopt;
    auto ciphertext = sealed.first(sealed.size() - 16);
    auto tag = sealed.last(16);
    CipherCtx ctx(EVP_CIPHER_CTX_new());
    if (!ctx) fail("cipher ctx");
    if (EVP_DecryptInit_ex(ctx.get(), EVP_aes_128_gcm(), nullptr, nullptr, nullptr) != 1) fail("gcm init");
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(nonce.size()), nullptr) != 1)
        fail("gcm ivlen");
    if (EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), nonce.data()) != 1) fail("gcm key");
    int len = 0;
    if (!aad.empty() && EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1)
        return std::nullopt;
    ByteVec out(ciphertext.size());
    int written = 0;
    if (!ciphertext.empty() &&
        EVP_DecryptUpdate(ctx.get(), out.data(), &written, ciphertext.data(), static_cast<int>(ciphertext.size())) != 1)
        return std::nullopt;
    ByteVec tag_copy(tag.begin(), tag.end());
    if (EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, 16, tag_copy.data()) != 1) return std::nullopt;
    int fin = 0;
    if (EVP_DecryptFinal_ex(ctx.get(), out.data() + written, &fin) != 1) return std::nullopt;
    return out;
}

std::array<std::uint8_t, 16> aes128_ecb_block(ByteView key, ByteView block)
{
    if (key.size() != 16 || block.size() < 16) fail("ecb input size");
    CipherCtx ctx(EVP_CIPHER_CTX_new());
    if (!ctx) fail("cipher ctx");
    if (EVP_EncryptInit_ex(ctx.get(), EVP_aes_128_ecb(), nullptr, key.data(), nullptr) != 1) fail("ecb init");
    EVP_CIPHER_CTX_set_padding(ctx.get(), 0);
    std::array<std::uint8_t, 16> out{};
    int len = 0;
    if (EVP_EncryptUpdate(ctx.get(), out.data(), &len, block.data(), 16) != 1) fail("ecb update");
    return out;
}

std::array<std::uint8_t, 32> sha256(ByteView data)
{
    std::array<std::uint8_t, 32> out{};
    SHA256(data.data(), data.size(), out.data());
    return out;
}

void random_bytes(std::span<std::uint8_t> out)
{
    if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) fail("RAND_bytes");
}

} // namespace zr::crypto
