import numpy as np
import pytest

from homux.errors import (
    ConfigError,
    DataError,
    EstimationError,
    SchemaError,
    SingularCovarianceError,
    StageFailure,
    as_homux_error,
)


@pytest.mark.parametrize("exc, kind, code", [
    (np.linalg.LinAlgError("not positive definite"), EstimationError, 4),
    (ZeroDivisionError("division by zero"), EstimationError, 4),
    (FloatingPointError("overflow"), EstimationError, 4),
    (KeyError("layer"), DataError, 3),
    (ValueError("bad literal"), DataError, 3),
    (OSError("disk"), DataError, 3),
])
def test_foreign_exceptions_are_mapped(exc, kind, code):
    err = as_homux_error(exc)
    assert type(err) is kind
    assert err.exit_code == code
    assert err.__cause__ is exc
    assert type(exc).__name__ in str(err)


def test_homux_errors_pass_through():
    err = SchemaError("item sets differ")
    assert as_homux_error(err) is err


@pytest.mark.parametrize("cause, code", [
    (ConfigError("no seed"), 2),
    (SchemaError("malformed"), 3),
    (SingularCovarianceError("singular"), 4),
    (KeyError("layer"), 3),
    (np.linalg.LinAlgError("svd did not converge"), 4),
])
def test_stage_failure_exit_codes(cause, code):
    failure = StageFailure("AN", "multiplex", cause)
    assert failure.exit_code == code
    assert (failure.layer, failure.stage) == ("AN", "multiplex")
    assert failure.exit_code in (2, 3, 4)
