import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.io import wavfile

from kopause import _kernels_py, kernels
from kopause.audio import (
    MelConfig,
    MelSpectrogram,
    PauseSegment,
    Waveform,
    _hz_to_mel,
    _mel_to_hz,
    detect_pauses,
    griffin_lim_invert,
    load_mel,
    load_wav,
    mel_filterbank,
    mel_spectrogram,
    pause_statistics,
    save_mel,
)
from kopause.errors import AudioError, RateMismatchError

SR = 22050
CFG = MelConfig()


def tone(freq=440.0, seconds=1.0, amp=0.5):
    t = np.arange(int(seconds * SR)) / SR
    return Waveform(amp * np.sin(2 * np.pi * freq * t), SR)


def test_load_wav_length(tmp_path):
    n = int(round(2.38 * SR))
    assert n == 52479
    wavfile.write(tmp_path / "a.wav", SR, np.zeros(n, dtype=np.int16))
    assert len(load_wav(tmp_path / "a.wav").samples) == 52479


def test_load_wav_full_scale(tmp_path):
    wavfile.write(tmp_path / "a.wav", SR, np.array([32767, -32768, 0], dtype=np.int16))
    x = load_wav(tmp_path / "a.wav").samples
    assert abs(x[0] - 1.0) <= 1 / 32768
    assert x[1] == -1.0


def test_load_wav_stereo_downmix(tmp_path):
    data = np.array([[16384, 0], [0, -16384]], dtype=np.int16)
    wavfile.write(tmp_path / "s.wav", SR, data)
    np.testing.assert_allclose(load_wav(tmp_path / "s.wav").samples, [0.25, -0.25])


def test_load_wav_errors(tmp_path):
    with pytest.raises(AudioError):
        load_wav(tmp_path / "missing.wav")
    wavfile.write(tmp_path / "empty.wav", SR, np.zeros(0, dtype=np.int16))
    with pytest.raises(AudioError):
        load_wav(tmp_path / "empty.wav")
    wavfile.write(tmp_path / "f.wav", SR, np.zeros(10, dtype=np.float32))
    with pytest.raises(AudioError):
        load_wav(tmp_path / "f.wav")
    wavfile.write(tmp_path / "r.wav", 16000, np.zeros(10, dtype=np.int16))
    with pytest.raises(RateMismatchError):
        load_wav(tmp_path / "r.wav")


def test_frame_count_one_second():
    m = mel_spectrogram(tone(seconds=1.0))
    # 1 + floor((padded length - n_fft) / hop) with n_fft // 2 padding on both sides
    assert m.frames.shape == (1 + (SR + 1024 - 1024) // 256, 80)
    assert abs(m.n_frames - SR / 256) <= 1


def test_silence_is_floor():
    m = mel_spectrogram(Waveform(np.zeros(SR // 2), SR))
    assert np.all(m.frames == np.log(CFG.log_floor))


def test_doubling_adds_log2():
    a = mel_spectrogram(tone(amp=0.2)).frames
    b = mel_spectrogram(tone(amp=0.4)).frames
    floor = np.log(CFG.log_floor)
    unclamped = (a > floor + 1e-9) & (b > floor + 1e-9)
    assert unclamped.sum() > 100
    np.testing.assert_allclose(b[unclamped] - a[unclamped], np.log(2.0), atol=1e-9)


def test_mel_deterministic():
    w = tone()
    assert np.array_equal(mel_spectrogram(w).frames, mel_spectrogram(w).frames)


def test_too_short():
    with pytest.raises(AudioError):
        mel_spectrogram(Waveform(np.zeros(100), SR))


def test_slaney_scale_reference_points():
    assert _hz_to_mel(1000.0) == pytest.approx(15.0)
    assert _hz_to_mel(200.0) == pytest.approx(3.0)
    f = np.array([0.0, 440.0, 1000.0, 4000.0, 8000.0])
    np.testing.assert_allclose(_mel_to_hz(_hz_to_mel(f)), f)


def test_filterbank_shape_and_peaks():
    fb = mel_filterbank(CFG)
    assert fb.shape == (80, 513)
    assert np.all(fb >= 0)
    peaks = fb.argmax(axis=1)
    assert np.all(np.diff(peaks) >= 0)
    freqs = np.linspace(0, SR / 2, 513)
    assert freqs[fb.any(axis=0)].max() <= CFG.fmax


def test_griffin_lim_tone_peak():
    m = mel_spectrogram(tone(440.0, 1.0))
    out = griffin_lim_invert(m, iterations=30, seed=0)
    spec = np.abs(np.fft.rfft(out.samples))
    peak_hz = np.fft.rfftfreq(len(out.samples), 1 / SR)[spec.argmax()]
    band = (_hz_to_mel(CFG.fmax) - _hz_to_mel(CFG.fmin)) / (CFG.n_mels + 1)
    assert abs(_hz_to_mel(peak_hz) - _hz_to_mel(440.0)) <= band


def test_griffin_lim_floor_is_silent():
    m = MelSpectrogram(np.full((40, 80), np.log(CFG.log_floor)), CFG)
    out = griffin_lim_invert(m, iterations=5)
    assert np.sqrt(np.mean(out.samples**2)) < 1e-3


def test_griffin_lim_deterministic():
    m = mel_spectrogram(tone(300.0, 0.3))
    a = griffin_lim_invert(m, iterations=5, seed=3).samples
    b = griffin_lim_invert(m, iterations=5, seed=3).samples
    assert np.array_equal(a, b)


def test_griffin_lim_rejects_nonfinite():
    frames = np.zeros((10, 80))
    frames[3, 3] = np.nan
    with pytest.raises(AudioError):
        griffin_lim_invert(MelSpectrogram(frames, CFG))


def constructed(pattern):
    """Spectrogram from (is_silent, n_frames) runs: loud frames at 0, silent at -10."""
    rows = []
    for silent, n in pattern:
        rows += [np.full(80, -10.0 if silent else 0.0)] * n
    return MelSpectrogram(np.array(rows), CFG)


def test_detect_single_pause():
    segs = detect_pauses(constructed([(0, 10), (1, 8), (0, 10)]), threshold=-5.0, min_frames=5)
    assert [(s.start, s.end, s.position) for s in segs] == [(10, 18, "internal")]


def test_detect_all_loud():
    assert detect_pauses(constructed([(0, 30)]), threshold=-5.0, min_frames=5) == []


def test_detect_below_minimum():
    assert detect_pauses(constructed([(0, 10), (1, 3), (0, 10)]), threshold=-5.0, min_frames=5) == []


def test_edge_silence_reported_separately():
    segs = detect_pauses(constructed([(1, 6), (0, 10), (1, 7), (0, 10), (1, 5)]), threshold=-5.0, min_frames=5)
    assert [s.position for s in segs] == ["leading", "internal", "trailing"]
    stats = pause_statistics(segs, 38, CFG)
    assert stats.count == 1
    assert stats.leading_silence == pytest.approx(6 * 256 / SR)
    assert stats.trailing_silence == pytest.approx(5 * 256 / SR)


def test_default_threshold_is_percentile():
    m = constructed([(0, 10), (1, 8), (0, 10)])
    assert [(s.start, s.end) for s in detect_pauses(m, min_frames=5)] == [(10, 18)]


def test_stats_single_segment():
    s = pause_statistics([PauseSegment(10, 18, 8 * 256 / SR)], 100, CFG)
    assert s.count == 1
    assert s.mean_duration == pytest.approx(0.0929, abs=5e-5)
    assert s.total_pause_time == pytest.approx(8 * 256 / SR)
    assert s.pause_rate == pytest.approx(1 / (100 * 256 / SR))


def test_stats_empty_and_equal():
    s = pause_statistics([], 50, CFG)
    assert (s.count, s.mean_duration, s.total_pause_time) == (0, 0.0, 0.0)
    d = 6 * 256 / SR
    s = pause_statistics([PauseSegment(5, 11, d), PauseSegment(20, 26, d)], 50, CFG)
    assert s.mean_duration == pytest.approx(d)
    assert s.total_pause_time == pytest.approx(2 * d)


def test_stats_overlap_error():
    with pytest.raises(ValueError):
        pause_statistics([PauseSegment(5, 11, 0.1), PauseSegment(10, 16, 0.1)], 50, CFG)


def total_silence(segs):
    return sum(s.end - s.start for s in segs)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_detector_properties(seed, min_frames):
    rng = np.random.default_rng(seed)
    frames = rng.normal(-5, 3, size=(rng.integers(1, 200), 80)).cumsum(axis=0) * 0.05
    m = MelSpectrogram(frames, CFG)
    thresholds = np.sort(rng.normal(frames.mean(), 1.0, size=6))
    prev = None
    for thr in thresholds[::-1]:
        segs = detect_pauses(m, thr, min_frames)
        for a, b in zip(segs, segs[1:]):
            assert a.end <= b.start
        assert all(s.end - s.start >= min_frames for s in segs)
        if prev is not None:
            assert total_silence(segs) <= prev
        prev = total_silence(segs)


def test_concatenation_unions_pauses():
    a = constructed([(0, 10), (1, 8), (0, 10)])
    b = constructed([(0, 10), (1, 6), (0, 4), (1, 9), (0, 10)])
    joined = MelSpectrogram(np.vstack([a.frames, b.frames]), CFG)
    parts = [(s.start, s.end) for s in detect_pauses(a, -5.0, 5)]
    parts += [(s.start + a.n_frames, s.end + a.n_frames) for s in detect_pauses(b, -5.0, 5)]
    assert [(s.start, s.end) for s in detect_pauses(joined, -5.0, 5)] == parts


@given(st.lists(st.floats(-20, 20), max_size=100), st.floats(-20, 20))
def test_silent_run_kernels_agree(values, thr):
    arr = np.asarray(values, dtype=np.float64)
    assert kernels.silent_runs(arr, thr) == _kernels_py.silent_runs(arr, thr)


def test_mel_file_round_trip(tmp_path):
    frames = np.random.default_rng(0).normal(size=(12, 80))
    save_mel(tmp_path / "m.kpmel", frames, CFG.digest())
    back, h = load_mel(tmp_path / "m.kpmel")
    assert h == CFG.digest()
    np.testing.assert_allclose(back, frames.astype(np.float32))
    raw = (tmp_path / "m.kpmel").read_bytes()
    (tmp_path / "t.kpmel").write_bytes(raw[:-4])
    with pytest.raises(AudioError):
        load_mel(tmp_path / "t.kpmel")
