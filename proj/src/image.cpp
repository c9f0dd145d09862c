#include "relforge/image.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <string>

#include "relforge/errors.hpp"

namespace relforge {

namespace {

// Read one whitespace-delimited PNM header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok += static_cast<char>(c);
  }
  return tok;
}

int header_int(std::istream& in, const std::string& path, const char* what) {
  std::string tok = header_token(in);
  try {
    return std::stoi(tok);
  } catch (...) {
    throw IoError(path + ": bad " + std::string(what) + " in header");
  }
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  std::string magic = header_token(in);
  Image img;
  if (magic == "P5" || magic == "P6") {
    img.channels = magic == "P5" ? 1 : 3;
    img.width = header_int(in, path.string(), "width");
    img.height = header_int(in, path.string(), "height");
    int maxval = header_int(in, path.string(), "maxval");
    if (maxval != 255) throw IoError(path.string() + ": only maxval 255 supported");
  } else if (magic == "P7") {
    int depth = 0;
    while (true) {
      std::string key = header_token(in);
      if (key.empty()) throw IoError(path.string() + ": truncated PAM header");
      if (key == "ENDHDR") break;
      if (key == "WIDTH") {
        img.width = header_int(in, path.string(), "width");
      } else if (key == "HEIGHT") {
        img.height = header_int(in, path.string(), "height");
      } else if (key == "DEPTH") {
        depth = header_int(in, path.string(), "depth");
      } else if (key == "MAXVAL") {
        if (header_int(in, path.string(), "maxval") != 255) {
          throw IoError(path.string() + ": only maxval 255 supported");
        }
      } else {
        header_token(in);  // TUPLTYPE value or other ignorable pair
      }
    }
    if (depth < 1 || depth > 4) {
      throw IoError(path.string() + ": unsupported PAM depth");
    }
    img.channels = depth;
  } else {
    throw IoError(path.string() + ": not a binary PNM/PAM file");
  }
  if (img.width <= 0 || img.height <= 0) {
    throw IoError(path.string() + ": bad dimensions");
  }
  std::size_t bytes =
      static_cast<std::size_t>(img.width) * img.height * img.channels;
  img.data.resize(bytes);
  in.read(reinterpret_cast<char*>(img.data.data()),
          static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes) {
    throw IoError(path.string() + ": truncated pixel data");
  }
  return img;
}

void write_image(const Image& img, const std::filesystem::path& path) {
  if (img.width <= 0 || img.height <= 0 ||
      (img.channels != 1 && img.channels != 3 && img.channels != 4)) {
    throw IoError("write_image: unsupported shape");
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    std::ostringstream header;
    if (img.channels == 1) {
      header << "P5\n" << img.width << " " << img.height << "\n255\n";
    } else if (img.channels == 3) {
      header << "P6\n" << img.width << " " << img.height << "\n255\n";
    } else {
      header << "P7\nWIDTH " << img.width << "\nHEIGHT " << img.height
             << "\nDEPTH 4\nMAXVAL 255\nTUPLTYPE RGB_ALPHA\nENDHDR\n";
    }
    out << header.str();
    out.write(reinterpret_cast<const char*>(img.data.data()),
              static_cast<std::streamsize>(img.data.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + path.string() + ": " + ec.message());
}

}  // namespace relforge
