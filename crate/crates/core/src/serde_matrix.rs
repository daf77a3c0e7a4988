//! Serde adapters writing a matrix as an array of row arrays.

pub mod rows {
    use ndarray::Array2;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.rows().into_iter().map(|r| r.to_vec()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        from_rows(rows).map_err(D::Error::custom)
    }

    pub(crate) fn from_rows(rows: Vec<Vec<f64>>) -> Result<Array2<f64>, String> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err("ragged matrix".into());
        }
        Array2::from_shape_vec((n, m), rows.into_iter().flatten().collect()).map_err(|e| e.to_string())
    }
}

pub mod rows_opt {
    use ndarray::Array2;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<Array2<f64>>, s: S) -> Result<S::Ok, S::Error> {
        match m {
            Some(m) => super::rows::serialize(m, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Array2<f64>>, D::Error> {
        let rows: Option<Vec<Vec<f64>>> = Option::deserialize(d)?;
        rows.map(|r| super::rows::from_rows(r).map_err(D::Error::custom))
            .transpose()
    }
}
