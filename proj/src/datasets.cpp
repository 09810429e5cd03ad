#include "plite/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>

namespace fs = std::filesystem;

namespace plite {

namespace {

constexpr uint32_t kIdxImagesMagic = 0x00000803;
constexpr uint32_t kIdxLabelsMagic = 0x00000801;

uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated IDX header in " + path);
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

void write_be32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw IoError("cannot open " + images_path);
    std::ifstream lbls(labels_path, std::ios::binary);
    if (!lbls) throw IoError("cannot open " + labels_path);

    const uint32_t img_magic = read_be32(imgs, images_path);
    if (img_magic != kIdxImagesMagic) {
        throw Error("bad IDX image magic in " + images_path + ": got " + std::to_string(img_magic));
    }
    const uint32_t n_img = read_be32(imgs, images_path);
    const uint32_t rows = read_be32(imgs, images_path);
    const uint32_t cols = read_be32(imgs, images_path);

    const uint32_t lbl_magic = read_be32(lbls, labels_path);
    if (lbl_magic != kIdxLabelsMagic) {
        throw Error("bad IDX label magic in " + labels_path + ": got " + std::to_string(lbl_magic));
    }
    const uint32_t n_lbl = read_be32(lbls, labels_path);
    if (n_img != n_lbl) {
        throw Error("IDX count mismatch: " + std::to_string(n_img) + " images vs " +
                    std::to_string(n_lbl) + " labels");
    }

    LabeledDataset ds;
    std::vector<unsigned char> buf(static_cast<size_t>(rows) * cols);
    int max_label = -1;
    for (uint32_t i = 0; i < n_img; ++i) {
        if (!imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
            throw IoError("truncated IDX image data in " + images_path + " at item " + std::to_string(i));
        }
        char lb;
        if (!lbls.read(&lb, 1)) {
            throw IoError("truncated IDX label data in " + labels_path + " at item " + std::to_string(i));
        }
        std::vector<float> px(buf.size());
        for (size_t j = 0; j < buf.size(); ++j) px[j] = static_cast<float>(buf[j]) / 255.0f;
        Example ex;
        ex.image = Tensor({static_cast<int>(rows), static_cast<int>(cols), 1}, std::move(px));
        ex.label = static_cast<unsigned char>(lb);
        max_label = std::max(max_label, ex.label);
        ds.items.push_back(std::move(ex));
    }
    for (int c = 0; c <= max_label; ++c) ds.class_names.push_back(std::to_string(c));
    return ds;
}

void write_idx(const LabeledDataset& ds, const std::string& images_path,
               const std::string& labels_path) {
    if (ds.items.empty()) throw Error("write_idx: empty dataset");
    const int rows = ds.items[0].image.dim(0);
    const int cols = ds.items[0].image.dim(1);

    std::ofstream imgs(images_path, std::ios::binary);
    if (!imgs) throw IoError("cannot write " + images_path);
    std::ofstream lbls(labels_path, std::ios::binary);
    if (!lbls) throw IoError("cannot write " + labels_path);

    write_be32(imgs, kIdxImagesMagic);
    write_be32(imgs, static_cast<uint32_t>(ds.items.size()));
    write_be32(imgs, static_cast<uint32_t>(rows));
    write_be32(imgs, static_cast<uint32_t>(cols));
    write_be32(lbls, kIdxLabelsMagic);
    write_be32(lbls, static_cast<uint32_t>(ds.items.size()));

    std::vector<unsigned char> buf(static_cast<size_t>(rows) * cols);
    for (const Example& ex : ds.items) {
        if (ex.image.dim(0) != rows || ex.image.dim(1) != cols) {
            throw Error("write_idx: mixed image dimensions");
        }
        const std::vector<float>& px = ex.image.data();
        for (size_t j = 0; j < buf.size(); ++j) {
            const float v = std::clamp(px[j], 0.0f, 1.0f);
            buf[j] = static_cast<unsigned char>(std::lround(v * 255.0f));
        }
        imgs.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        const char lb = static_cast<char>(ex.label);
        lbls.write(&lb, 1);
    }
}

namespace {

void skip_pgm_space(std::istream& in) {
    // whitespace and '#' comment lines separate PGM header tokens
    int ch = in.peek();
    while (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n' || ch == '#') {
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
        } else {
            in.get();
        }
        ch = in.peek();
    }
}

int read_pgm_int(std::istream& in, const std::string& path) {
    skip_pgm_space(in);
    int v = -1;
    if (!(in >> v) || v < 0) throw Error("bad PGM header field in " + path);
    return v;
}

}  // namespace

Tensor load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '5') throw Error("not a binary PGM (P5) file: " + path);
    const int w = read_pgm_int(in, path);
    const int h = read_pgm_int(in, path);
    const int maxval = read_pgm_int(in, path);
    if (maxval > 255) {
        throw Error("unsupported PGM depth in " + path + ": maxval " + std::to_string(maxval));
    }
    if (maxval < 1 || w < 1 || h < 1) throw Error("bad PGM header in " + path);
    in.get();  // single whitespace before raster

    std::vector<unsigned char> buf(static_cast<size_t>(w) * h);
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
        throw IoError("truncated PGM raster in " + path);
    }
    std::vector<float> px(buf.size());
    const float inv = 1.0f / static_cast<float>(maxval);
    for (size_t i = 0; i < buf.size(); ++i) px[i] = static_cast<float>(buf[i]) * inv;
    return Tensor({h, w, 1}, std::move(px));
}

void write_pgm(const Tensor& image, const std::string& path) {
    if (image.rank() != 3 || image.dim(2) != 1) {
        throw Error("write_pgm expects [h,w,1], got " + image.shape_str());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    const int h = image.dim(0), w = image.dim(1);
    out << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> buf(static_cast<size_t>(w) * h);
    const std::vector<float>& px = image.data();
    for (size_t i = 0; i < buf.size(); ++i) {
        buf[i] = static_cast<unsigned char>(std::lround(std::clamp(px[i], 0.0f, 1.0f) * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

LabeledDataset load_folder(const std::string& root) {
    if (!fs::is_directory(root)) throw IoError("dataset root is not a directory: " + root);
    std::vector<std::string> classes;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) classes.push_back(entry.path().filename().string());
    }
    if (classes.empty()) throw Error("dataset root has no class subdirectories: " + root);
    std::sort(classes.begin(), classes.end());

    LabeledDataset ds;
    ds.class_names = classes;
    std::vector<int> dims;
    for (size_t c = 0; c < classes.size(); ++c) {
        std::vector<std::string> files;
        for (const auto& entry : fs::directory_iterator(fs::path(root) / classes[c])) {
            if (entry.is_regular_file()) files.push_back(entry.path().string());
        }
        if (files.empty()) {
            std::cerr << "warning: class '" << classes[c] << "' has no images\n";
            continue;
        }
        std::sort(files.begin(), files.end());
        for (const std::string& f : files) {
            Tensor img;
            try {
                img = load_pgm(f);
            } catch (const Error& e) {
                throw Error(std::string(e.what()) + " (while loading " + f + ")");
            }
            if (dims.empty()) {
                dims = img.shape();
            } else if (img.shape() != dims) {
                throw Error("mixed image dimensions: " + f + " is " + img.shape_str() +
                            ", expected " + Tensor::shape_str(dims));
            }
            ds.items.push_back({std::move(img), static_cast<int>(c)});
        }
    }
    return ds;
}

void write_folder_pgm(const LabeledDataset& ds, const std::string& root) {
    fs::create_directories(root);
    std::vector<int> counter(ds.class_names.size(), 0);
    for (size_t c = 0; c < ds.class_names.size(); ++c) {
        fs::create_directories(fs::path(root) / ds.class_names[c]);
    }
    for (const Example& ex : ds.items) {
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05d.pgm", counter[static_cast<size_t>(ex.label)]++);
        write_pgm(ex.image, (fs::path(root) / ds.class_names[static_cast<size_t>(ex.label)] / name).string());
    }
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, double train_fraction,
                                                uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw Error("train_fraction must be in (0,1), got " + std::to_string(train_fraction));
    }
    std::vector<std::vector<size_t>> by_class(ds.class_names.size());
    for (size_t i = 0; i < ds.items.size(); ++i) {
        by_class[static_cast<size_t>(ds.items[i].label)].push_back(i);
    }
    std::mt19937_64 rng(seed);
    LabeledDataset train, val;
    train.class_names = ds.class_names;
    val.class_names = ds.class_names;
    for (size_t c = 0; c < by_class.size(); ++c) {
        auto& idx = by_class[c];
        if (idx.size() < 2) {
            throw Error("class '" + ds.class_names[c] + "' has " + std::to_string(idx.size()) +
                        " items; need >= 2 to stratify");
        }
        std::shuffle(idx.begin(), idx.end(), rng);
        const size_t n_train = static_cast<size_t>(std::floor(train_fraction * static_cast<double>(idx.size())));
        for (size_t i = 0; i < idx.size(); ++i) {
            (i < n_train ? train : val).items.push_back(ds.items[idx[i]]);
        }
    }
    return {std::move(train), std::move(val)};
}

LabeledDataset synth_dataset(const SynthSpec& spec, uint64_t seed) {
    if (spec.classes < 2) throw Error("synth_dataset needs >= 2 classes");
    if (spec.per_class < 1 || spec.image_size < spec.classes) {
        throw Error("synth_dataset: bad per_class/image_size");
    }
    const int n = spec.image_size;
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> noise(0.0f, static_cast<float>(spec.noise_sigma));

    // numeric class names so IDX round trips (which drop names) stay consistent
    LabeledDataset ds;
    for (int c = 0; c < spec.classes; ++c) ds.class_names.push_back(std::to_string(c));

    const int thickness = std::max(1, n / (2 * spec.classes));
    for (int c = 0; c < spec.classes; ++c) {
        const int row0 = (c * n) / spec.classes;
        for (int i = 0; i < spec.per_class; ++i) {
            Tensor img = Tensor::zeros({n, n, 1});
            float* px = img.data().data();
            for (int r = row0; r < std::min(n, row0 + thickness); ++r) {
                for (int x = 0; x < n; ++x) px[static_cast<size_t>(r) * n + x] = 1.0f;
            }
            if (spec.noise_sigma > 0.0) {
                for (int j = 0; j < n * n; ++j) {
                    px[j] = std::clamp(px[j] + noise(rng), 0.0f, 1.0f);
                }
            }
            ds.items.push_back({std::move(img), c});
        }
    }
    return ds;
}

namespace {

// 5x7 digit glyphs, one string per row, '#' = ink.
const char* const kDigitFont[10][7] = {
    {" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "},  // 0
    {"  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "},  // 1
    {" ### ", "#   #", "    #", "  ## ", " #   ", "#    ", "#####"},  // 2
    {" ### ", "#   #", "    #", " ### ", "    #", "#   #", " ### "},  // 3
    {"   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "},  // 4
    {"#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "},  // 5
    {" ### ", "#    ", "#    ", "#### ", "#   #", "#   #", " ### "},  // 6
    {"#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   "},  // 7
    {" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "},  // 8
    {" ### ", "#   #", "#   #", " ####", "    #", "    #", " ### "},  // 9
};

}  // namespace

LabeledDataset synth_digits(int per_class, uint64_t seed, int image_size, double noise_sigma,
                            int jitter) {
    if (per_class < 1) throw Error("synth_digits: per_class must be >= 1");
    const int scale = std::max(1, (image_size - 2 * jitter - 2) / 7);
    const int glyph_h = 7 * scale, glyph_w = 5 * scale;
    if (glyph_h + 2 * jitter > image_size || glyph_w + 2 * jitter > image_size) {
        throw Error("synth_digits: image_size too small for jitter " + std::to_string(jitter));
    }
    const int base_y = (image_size - glyph_h) / 2;
    const int base_x = (image_size - glyph_w) / 2;

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> jit(-jitter, jitter);
    std::uniform_real_distribution<float> ink(0.65f, 1.0f);
    std::normal_distribution<float> noise(0.0f, static_cast<float>(noise_sigma));

    LabeledDataset ds;
    for (int c = 0; c < 10; ++c) ds.class_names.push_back(std::to_string(c));
    for (int c = 0; c < 10; ++c) {
        for (int i = 0; i < per_class; ++i) {
            const int oy = base_y + jit(rng);
            const int ox = base_x + jit(rng);
            const float v = ink(rng);
            Tensor img = Tensor::zeros({image_size, image_size, 1});
            float* px = img.data().data();
            for (int gy = 0; gy < 7; ++gy) {
                for (int gx = 0; gx < 5; ++gx) {
                    if (kDigitFont[c][gy][gx] != '#') continue;
                    for (int sy = 0; sy < scale; ++sy) {
                        for (int sx = 0; sx < scale; ++sx) {
                            const int y = oy + gy * scale + sy;
                            const int x = ox + gx * scale + sx;
                            px[static_cast<size_t>(y) * image_size + x] = v;
                        }
                    }
                }
            }
            if (noise_sigma > 0.0) {
                for (int j = 0; j < image_size * image_size; ++j) {
                    px[j] = std::clamp(px[j] + noise(rng), 0.0f, 1.0f);
                }
            }
            ds.items.push_back({std::move(img), c});
        }
    }
    return ds;
}

LabeledDataset take_round_robin(const LabeledDataset& ds, int n) {
    if (n < 0 || static_cast<size_t>(n) > ds.items.size()) {
        throw Error("take_round_robin: requested " + std::to_string(n) + " of " +
                    std::to_string(ds.items.size()) + " items");
    }
    std::vector<std::vector<size_t>> by_class(ds.class_names.size());
    for (size_t i = 0; i < ds.items.size(); ++i) {
        by_class[static_cast<size_t>(ds.items[i].label)].push_back(i);
    }
    LabeledDataset out;
    out.class_names = ds.class_names;
    size_t round = 0;
    while (static_cast<int>(out.items.size()) < n) {
        bool any = false;
        for (auto& idx : by_class) {
            if (round < idx.size()) {
                any = true;
                out.items.push_back(ds.items[idx[round]]);
                if (static_cast<int>(out.items.size()) == n) return out;
            }
        }
        if (!any) break;
        ++round;
    }
    return out;
}

}  // namespace plite
