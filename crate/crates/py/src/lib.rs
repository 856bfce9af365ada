use pyo3::prelude::*;

#[pymodule]
fn debruijn_dht_py(_py: Python<'_>, _m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
