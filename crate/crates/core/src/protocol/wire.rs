//! Little-endian field readers and writers.

use crate::geometry::{Pose, Quat, Vec3};

pub(super) struct Writer<'a> {
    buf: &'a mut Vec<u8>,
    non_finite: Option<&'static str>,
}

impl<'a> Writer<'a> {
    pub fn new(buf: &'a mut Vec<u8>) -> Self {
        Writer { buf, non_finite: None }
    }

    /// Name of the first non-finite float written, if any.
    pub fn non_finite(&self) -> Option<&'static str> {
        self.non_finite
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, field: &'static str, v: f64) {
        if !v.is_finite() && self.non_finite.is_none() {
            self.non_finite = Some(field);
        }
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn vec3(&mut self, field: &'static str, v: &Vec3) {
        self.f64(field, v.x);
        self.f64(field, v.y);
        self.f64(field, v.z);
    }

    pub fn quat(&mut self, field: &'static str, q: &Quat) {
        self.f64(field, q.w);
        self.f64(field, q.x);
        self.f64(field, q.y);
        self.f64(field, q.z);
    }

    /// Position then scalar-first quaternion; the timestamp is not encoded.
    pub fn pose(&mut self, field: &'static str, p: &Pose) {
        self.vec3(field, &p.position);
        self.quat(field, &p.orientation);
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.u32(v.len() as u32);
        self.buf.extend_from_slice(v);
    }

    pub fn string(&mut self, v: &str) {
        self.bytes(v.as_bytes());
    }
}

pub(super) struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

/// Failure inside a payload: relative offset and description.
pub(super) type FieldError = (usize, String);

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Reader { data, pos: 0 }
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    pub fn finish(&self) -> Result<(), FieldError> {
        if self.pos != self.data.len() {
            return Err((self.pos, format!("{} trailing bytes", self.data.len() - self.pos)));
        }
        Ok(())
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], FieldError> {
        if self.data.len() - self.pos < n {
            return Err((self.pos, format!("truncated {what}")));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self, what: &str) -> Result<u8, FieldError> {
        Ok(self.take(1, what)?[0])
    }

    pub fn bool(&mut self, what: &str) -> Result<bool, FieldError> {
        let at = self.pos;
        match self.u8(what)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err((at, format!("{what}: invalid bool {other}"))),
        }
    }

    pub fn u16(&mut self, what: &str) -> Result<u16, FieldError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self, what: &str) -> Result<u32, FieldError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn f64(&mut self, what: &str) -> Result<f64, FieldError> {
        let at = self.pos;
        let b = self.take(8, what)?;
        let v = f64::from_le_bytes(b.try_into().expect("8 bytes"));
        if !v.is_finite() {
            return Err((at, format!("{what}: non-finite float")));
        }
        Ok(v)
    }

    pub fn vec3(&mut self, what: &str) -> Result<Vec3, FieldError> {
        Ok(Vec3::new(self.f64(what)?, self.f64(what)?, self.f64(what)?))
    }

    pub fn quat(&mut self, what: &str) -> Result<Quat, FieldError> {
        Ok(Quat { w: self.f64(what)?, x: self.f64(what)?, y: self.f64(what)?, z: self.f64(what)? })
    }

    pub fn pose(&mut self, what: &str) -> Result<Pose, FieldError> {
        let position = self.vec3(what)?;
        let orientation = self.quat(what)?;
        Ok(Pose::new(position, orientation, 0.0))
    }

    pub fn bytes(&mut self, what: &str) -> Result<Vec<u8>, FieldError> {
        let len = self.u32(what)? as usize;
        Ok(self.take(len, what)?.to_vec())
    }

    pub fn string(&mut self, what: &str) -> Result<String, FieldError> {
        let at = self.pos;
        let raw = self.bytes(what)?;
        String::from_utf8(raw).map_err(|_| (at, format!("{what}: invalid utf-8")))
    }
}
