#include "fr/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace fr {

Tensor load_image(const std::filesystem::path& path, int channels) {
    if (channels != 1 && channels != 3)
        throw std::invalid_argument("load_image: channels must be 1 or 3");
    if (!std::filesystem::exists(path))
        throw std::runtime_error("load_image: no such file: " + path.string());
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (m.empty())
        throw std::runtime_error("load_image: cannot decode: " + path.string());
    double maxval = m.depth() == CV_16U ? 65535.0 : 255.0;
    cv::Mat f;
    m.convertTo(f, CV_64F, 1.0 / maxval);
    if (f.channels() == 4) cv::cvtColor(f, f, cv::COLOR_BGRA2BGR);
    Tensor out(1, channels, f.rows, f.cols);
    for (int y = 0; y < f.rows; ++y)
        for (int x = 0; x < f.cols; ++x) {
            if (f.channels() == 1) {
                double v = f.at<double>(y, x);
                for (int c = 0; c < channels; ++c) out.at(0, c, y, x) = v;
            } else {
                cv::Vec3d v = f.at<cv::Vec3d>(y, x);  // BGR
                if (channels == 1)
                    out.at(0, 0, y, x) = 0.299 * v[2] + 0.587 * v[1] + 0.114 * v[0];
                else {
                    out.at(0, 0, y, x) = v[2];
                    out.at(0, 1, y, x) = v[1];
                    out.at(0, 2, y, x) = v[0];
                }
            }
        }
    return out;
}

void save_image(const Tensor& img, const std::filesystem::path& path) {
    if (img.b() != 1 || (img.c() != 1 && img.c() != 3))
        throw std::invalid_argument("save_image: expected 1x{1,3}xHxW");
    cv::Mat m(img.h(), img.w(), img.c() == 1 ? CV_8U : CV_8UC3);
    auto q = [](double v) {
        v = std::clamp(v, 0.0, 1.0);
        return static_cast<uchar>(std::lround(v * 255.0));
    };
    for (int y = 0; y < img.h(); ++y)
        for (int x = 0; x < img.w(); ++x) {
            if (img.c() == 1)
                m.at<uchar>(y, x) = q(img.at(0, 0, y, x));
            else
                m.at<cv::Vec3b>(y, x) = {q(img.at(0, 2, y, x)), q(img.at(0, 1, y, x)),
                                         q(img.at(0, 0, y, x))};
        }
    if (!cv::imwrite(path.string(), m))
        throw std::runtime_error("save_image: cannot write: " + path.string());
}

Tensor crop_patch(const Tensor& img, int top, int left, int size) {
    if (top < 0 || left < 0 || top + size > img.h() || left + size > img.w())
        throw std::out_of_range("crop_patch: window exceeds bounds");
    Tensor out(img.b(), img.c(), size, size);
    for (int b = 0; b < img.b(); ++b)
        for (int c = 0; c < img.c(); ++c)
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x)
                    out.at(b, c, y, x) = img.at(b, c, top + y, left + x);
    return out;
}

namespace {
int reflect(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}
}  // namespace

Tensor pad_to_multiple(const Tensor& img, int multiple, PadInfo& info) {
    int nh = (img.h() + multiple - 1) / multiple * multiple;
    int nw = (img.w() + multiple - 1) / multiple * multiple;
    info.bottom = nh - img.h();
    info.right = nw - img.w();
    if (info.bottom == 0 && info.right == 0) return img;
    Tensor out(img.b(), img.c(), nh, nw);
    for (int b = 0; b < img.b(); ++b)
        for (int c = 0; c < img.c(); ++c)
            for (int y = 0; y < nh; ++y)
                for (int x = 0; x < nw; ++x)
                    out.at(b, c, y, x) = img.at(b, c, reflect(y, img.h()), reflect(x, img.w()));
    return out;
}

Tensor unpad(const Tensor& img, const PadInfo& info) {
    if (info.bottom == 0 && info.right == 0) return img;
    Tensor out(img.b(), img.c(), img.h() - info.bottom, img.w() - info.right);
    for (int b = 0; b < img.b(); ++b)
        for (int c = 0; c < img.c(); ++c)
            for (int y = 0; y < out.h(); ++y)
                for (int x = 0; x < out.w(); ++x)
                    out.at(b, c, y, x) = img.at(b, c, y, x);
    return out;
}

Tensor to_gray(const Tensor& img) {
    if (img.c() == 1) return img;
    Tensor out(img.b(), 1, img.h(), img.w());
    for (int b = 0; b < img.b(); ++b)
        for (int y = 0; y < img.h(); ++y)
            for (int x = 0; x < img.w(); ++x)
                out.at(b, 0, y, x) = 0.299 * img.at(b, 0, y, x) + 0.587 * img.at(b, 1, y, x) +
                                     0.114 * img.at(b, 2, y, x);
    return out;
}

}  // namespace fr
