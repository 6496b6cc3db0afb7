import numpy as np
import pytest
import torch

from flowpred.model import NetworkSpec, TwoStreamRegressor, load_model, save_model

SMALL = NetworkSpec(in_size=(40, 40), stream_channels=(4, 8), fusion_channels=(8,),
                    fc_features=8)


def test_output_shape_and_positivity():
    torch.manual_seed(0)
    model = TwoStreamRegressor(SMALL)
    x = torch.randn(3, 1, 40, 40)
    y = torch.randn(3, 1, 40, 40)
    with torch.no_grad():
        out = model(x, y)
    assert out.shape == (3,)
    assert torch.all(out > 0)


def test_positivity_under_extreme_inputs():
    torch.manual_seed(0)
    model = TwoStreamRegressor(SMALL)
    x = 1e3 * torch.randn(2, 1, 40, 40)
    with torch.no_grad():
        out = model(x, -x)
    assert torch.all(out > 0) and torch.all(torch.isfinite(out))


def test_inference_purity():
    torch.manual_seed(1)
    model = TwoStreamRegressor(SMALL).eval()
    x = torch.randn(1, 1, 40, 40)
    y = torch.randn(1, 1, 40, 40)
    xb = torch.cat([x, x]); yb = torch.cat([y, y])
    with torch.no_grad():
        out = model(xb, yb)
    assert float(out[0]) == float(out[1])


def test_default_spec_matches_100_input():
    torch.manual_seed(0)
    model = TwoStreamRegressor(NetworkSpec())
    with torch.no_grad():
        out = model(torch.randn(2, 1, 100, 100), torch.randn(2, 1, 100, 100))
    assert out.shape == (2,)


def test_log_target_positivity():
    torch.manual_seed(0)
    spec = NetworkSpec(in_size=(40, 40), stream_channels=(4, 8), fusion_channels=(8,),
                       fc_features=8, log_target=True)
    model = TwoStreamRegressor(spec)
    with torch.no_grad():
        out = model(torch.randn(2, 1, 40, 40), torch.randn(2, 1, 40, 40))
    assert torch.all(out > 0)


def test_save_load_round_trip(tmp_path):
    torch.manual_seed(2)
    model = TwoStreamRegressor(SMALL).eval()
    x = torch.randn(1, 1, 40, 40)
    y = torch.randn(1, 1, 40, 40)
    with torch.no_grad():
        before = model(x, y)
    save_model(tmp_path / "m.pt", model)
    back = load_model(tmp_path / "m.pt")
    assert back.spec == SMALL
    with torch.no_grad():
        after = back(x, y)
    assert torch.allclose(before, after)


def test_spec_json_round_trip():
    spec = NetworkSpec(log_target=True)
    assert NetworkSpec.from_json(spec.to_json()) == spec
