#pragma once

// Little-endian binary read/write helpers shared by the file formats.

#include <algorithm>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace loadgan::io {

template <class T>
void put(std::ostream& os, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        std::reverse(b, b + sizeof(T));
        os.write(reinterpret_cast<const char*>(b), sizeof(T));
    } else {
        os.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }
}

// `where` names the file in the truncation error.
template <class T>
T get(std::istream& is, const std::string& where) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error(where + ": truncated");
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        std::reverse(b, b + sizeof(T));
        std::memcpy(&v, b, sizeof(T));
    }
    return v;
}

}  // namespace loadgan::io
