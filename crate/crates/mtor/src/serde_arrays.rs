//! Serde adapters keeping persisted matrices as plain nested JSON arrays.

pub mod array2 {
    use ndarray::Array2;
    use serde::de::Error as DeError;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(value: &Array2<f64>, ser: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = value.rows().into_iter().map(|r| r.to_vec()).collect();
        rows.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Array2<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(de)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        Array2::from_shape_vec((nrows, ncols), data).map_err(D::Error::custom)
    }
}

pub mod array1 {
    use ndarray::Array1;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(value: &Array1<f64>, ser: S) -> Result<S::Ok, S::Error> {
        value.to_vec().serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Array1<f64>, D::Error> {
        Ok(Array1::from_vec(Vec::<f64>::deserialize(de)?))
    }
}
