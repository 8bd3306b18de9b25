//! Serde adapters writing complex numbers as `[re, im]` pairs.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::scalar::{CMatrix, CVector, Real, C};

pub fn to_pair<R: Real>(z: &C<R>) -> [R; 2] {
    [z.re, z.im]
}

pub fn from_pair<R: Real>(p: [R; 2]) -> C<R> {
    C::new(p[0], p[1])
}

pub mod scalar {
    use super::*;

    pub fn serialize<R: Real, S: Serializer>(z: &C<R>, s: S) -> Result<S::Ok, S::Error> {
        to_pair(z).serialize(s)
    }

    pub fn deserialize<'de, R: Real, D: Deserializer<'de>>(d: D) -> Result<C<R>, D::Error> {
        Ok(from_pair(<[R; 2]>::deserialize(d)?))
    }
}

pub mod opt_scalar {
    use super::*;

    pub fn serialize<R: Real, S: Serializer>(z: &Option<C<R>>, s: S) -> Result<S::Ok, S::Error> {
        z.as_ref().map(to_pair).serialize(s)
    }

    pub fn deserialize<'de, R: Real, D: Deserializer<'de>>(d: D) -> Result<Option<C<R>>, D::Error> {
        Ok(Option::<[R; 2]>::deserialize(d)?.map(from_pair))
    }
}

pub mod vec {
    use super::*;

    pub fn serialize<R: Real, S: Serializer>(v: &[C<R>], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(to_pair).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, R: Real, D: Deserializer<'de>>(d: D) -> Result<Vec<C<R>>, D::Error> {
        Ok(Vec::<[R; 2]>::deserialize(d)?.into_iter().map(from_pair).collect())
    }
}

pub mod opt_vec {
    use super::*;

    pub fn serialize<R: Real, S: Serializer>(v: &Option<Vec<C<R>>>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(|v| v.iter().map(to_pair).collect::<Vec<_>>()).serialize(s)
    }

    pub fn deserialize<'de, R: Real, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<C<R>>>, D::Error> {
        Ok(Option::<Vec<[R; 2]>>::deserialize(d)?.map(|v| v.into_iter().map(from_pair).collect()))
    }
}

pub mod vector {
    use super::*;

    pub fn serialize<R: Real, S: Serializer>(v: &CVector<R>, s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(to_pair).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, R: Real, D: Deserializer<'de>>(d: D) -> Result<CVector<R>, D::Error> {
        let v: Vec<C<R>> = Vec::<[R; 2]>::deserialize(d)?.into_iter().map(from_pair).collect();
        Ok(CVector::from_vec(v))
    }
}

pub mod opt_vector {
    use super::*;

    pub fn serialize<R: Real, S: Serializer>(v: &Option<CVector<R>>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(|v| v.iter().map(to_pair).collect::<Vec<_>>()).serialize(s)
    }

    pub fn deserialize<'de, R: Real, D: Deserializer<'de>>(d: D) -> Result<Option<CVector<R>>, D::Error> {
        Ok(Option::<Vec<[R; 2]>>::deserialize(d)?
            .map(|v| CVector::from_vec(v.into_iter().map(from_pair).collect())))
    }
}

pub mod vectors {
    use super::*;

    pub fn serialize<R: Real, S: Serializer>(v: &[CVector<R>], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| x.iter().map(to_pair).collect::<Vec<_>>()).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, R: Real, D: Deserializer<'de>>(d: D) -> Result<Vec<CVector<R>>, D::Error> {
        Ok(Vec::<Vec<[R; 2]>>::deserialize(d)?
            .into_iter()
            .map(|x| CVector::from_vec(x.into_iter().map(from_pair).collect()))
            .collect())
    }
}

/// Row-major nested arrays.
pub mod matrix {
    use super::*;

    pub fn serialize<R: Real, S: Serializer>(m: &CMatrix<R>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[R; 2]>> =
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| to_pair(&m[(i, j)])).collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, R: Real, D: Deserializer<'de>>(d: D) -> Result<CMatrix<R>, D::Error> {
        let rows = Vec::<Vec<[R; 2]>>::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(CMatrix::from_fn(nrows, ncols, |i, j| from_pair(rows[i][j])))
    }
}
